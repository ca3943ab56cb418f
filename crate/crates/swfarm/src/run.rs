//! Scoring a database against one query on a farm.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use streamfarm::arbiter::SchedulingPolicy;
use streamfarm::farm::{build_farm, FarmConfig};
use streamfarm::graph::{RuntimeConfig, Svc};

use crate::align::{score_encoded, QueryProfile, Scratch};
use crate::fasta::Sequence;
use crate::scoring::ScoringScheme;
use crate::SwError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreResult {
    pub name: String,
    pub score: u32,
    /// |Q|·|S|
    pub cells: u64,
}

/// Scores one pair.
pub fn sw_score(query: &Sequence, subject: &Sequence, scheme: &ScoringScheme) -> ScoreResult {
    let score = crate::align::sw_score_raw(&query.residues, &subject.residues, scheme);
    ScoreResult {
        name: subject.name.clone(),
        score: score as u32,
        cells: query.len() as u64 * subject.len() as u64,
    }
}

/// Billions of cell updates per second.
pub fn gcups(q_len: u64, db_residues: u64, seconds: f64) -> Result<f64, SwError> {
    if !(seconds > 0.0) {
        return Err(SwError::Config(format!("elapsed time must be positive, got {seconds}")));
    }
    Ok(q_len as f64 * db_residues as f64 / (seconds * 1e9))
}

#[derive(Debug, Clone)]
pub struct Report {
    /// In database order.
    pub results: Vec<ScoreResult>,
    pub seconds: f64,
    pub cells: u64,
    pub gcups: f64,
}

impl Report {
    /// The score lines alone; independent of timing and worker count.
    pub fn body(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            s.push_str(&r.name);
            s.push('\t');
            s.push_str(&r.score.to_string());
            s.push('\n');
        }
        s
    }

    pub fn trailer(&self) -> String {
        format!(
            "# gcups={:.6} seconds={:.6} cells={}\n",
            self.gcups, self.seconds, self.cells
        )
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.body().as_bytes())?;
        w.write_all(self.trailer().as_bytes())?;
        w.flush()
    }
}

/// Scores every database sequence against `query` on an order-preserving
/// farm of `n_workers`, subjects dispatched to the least loaded worker.
pub fn run_swfarm(
    query: &Sequence,
    db: Vec<Sequence>,
    scheme: ScoringScheme,
    n_workers: usize,
) -> Result<Report, SwError> {
    if n_workers == 0 {
        return Err(SwError::Config("n_workers must be at least 1".into()));
    }
    let expected = db.len();
    let db_residues: u64 = db.iter().map(|s| s.len() as u64).sum();
    let q_len = query.len() as u64;

    let scheme = Arc::new(scheme);
    let profile = Arc::new(QueryProfile::new(&query.residues, &scheme));
    // Encoded once up front; workers only read.
    let db: Arc<Vec<(Sequence, Vec<u8>)>> = Arc::new(
        db.into_iter()
            .map(|s| {
                let enc = scheme.matrix.encode(&s.residues);
                (s, enc)
            })
            .collect(),
    );

    let mut next = 0usize;
    let emitter = move || {
        if next == expected {
            return Svc::End;
        }
        next += 1;
        Svc::Emit(next - 1)
    };
    let worker = {
        let db = Arc::clone(&db);
        let mut scratch = Scratch::default();
        move |i: usize| {
            let (seq, enc) = &db[i];
            let score = score_encoded(&profile, enc, &scheme, &mut scratch);
            Svc::Emit(ScoreResult {
                name: seq.name.clone(),
                score: score as u32,
                cells: q_len * seq.len() as u64,
            })
        }
    };
    let cfg = FarmConfig::new(n_workers)
        .ordered(true)
        .policy(SchedulingPolicy::OnDemand)
        .runtime(RuntimeConfig::from_env()?);
    let mut farm = build_farm(emitter, worker, Some(Svc::Emit), cfg)?;
    let outlet = farm.outlet(64)?;

    let start = Instant::now();
    let running = farm.run_ordered()?;
    let results: Vec<ScoreResult> = outlet.collect();
    running.wait()?;
    let seconds = start.elapsed().as_secs_f64();

    if results.len() != expected {
        return Err(SwError::Integrity(format!(
            "{} results for {expected} database sequences",
            results.len()
        )));
    }
    if let Some((i, r)) = results.iter().enumerate().find(|(i, r)| r.name != db[*i].0.name) {
        return Err(SwError::Integrity(format!(
            "result {i} is for {} but database order says {}",
            r.name, db[i].0.name
        )));
    }
    Ok(Report {
        cells: q_len * db_residues,
        gcups: gcups(q_len, db_residues, seconds.max(f64::MIN_POSITIVE))?,
        seconds,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcups_by_substitution() {
        assert_eq!(gcups(1000, 1_000_000_000, 1.0).unwrap(), 1000.0);
        assert_eq!(gcups(1, 1_000_000_000, 1.0).unwrap(), 1.0);
        assert_eq!(gcups(1000, 1_000_000, 1.0).unwrap(), 1.0);
        let t = 0.37;
        assert_eq!(gcups(144, 123_456_789, 2.0 * t).unwrap(), gcups(144, 123_456_789, t).unwrap() / 2.0);
        assert!(gcups(1, 1, 0.0).is_err());
        assert!(gcups(1, 1, -1.0).is_err());
    }

    #[test]
    fn three_sequences_one_worker_in_order() {
        let q = Sequence::new("q", "HEAGAWGHEE");
        let db = vec![
            Sequence::new("s1", "PAWHEAE"),
            Sequence::new("s2", "W"),
            Sequence::new("s3", "HEAGAWGHEE"),
        ];
        let scheme = ScoringScheme::blosum50(10, 2).unwrap();
        let expect: Vec<u32> = db.iter().map(|s| sw_score(&q, s, &scheme).score).collect();
        let r = run_swfarm(&q, db, scheme, 1).unwrap();
        assert_eq!(r.body(), format!("s1\t{}\ns2\t{}\ns3\t{}\n", expect[0], expect[1], expect[2]));
        assert_eq!(r.cells, 10 * 18);
        assert!(r.trailer().starts_with("# gcups="));
    }

    #[test]
    fn empty_database_and_zero_workers() {
        let q = Sequence::new("q", "A");
        let scheme = ScoringScheme::blosum50(10, 2).unwrap();
        assert!(run_swfarm(&q, vec![], scheme.clone(), 2).unwrap().results.is_empty());
        assert!(run_swfarm(&q, vec![], scheme, 0).is_err());
    }
}
