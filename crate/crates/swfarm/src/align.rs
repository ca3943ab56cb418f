//! Affine-gap local alignment, scores only, linear memory.

use crate::scoring::ScoringScheme;

/// Query scores against every alphabet symbol, laid out so the inner loop
/// over the query reads one contiguous row.
#[derive(Debug, Clone)]
pub struct QueryProfile {
    len: usize,
    // rows[symbol * len + j] = score(query[j], symbol)
    rows: Vec<i32>,
}

impl QueryProfile {
    pub fn new(query: &[u8], scheme: &ScoringScheme) -> Self {
        let m = &scheme.matrix;
        let q = m.encode(query);
        let mut rows = Vec::with_capacity(m.size() * q.len());
        for sym in 0..m.size() as u8 {
            rows.extend(q.iter().map(|&a| m.score_idx(a, sym)));
        }
        QueryProfile { len: q.len(), rows }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn row(&self, sym: u8) -> &[i32] {
        &self.rows[sym as usize * self.len..(sym as usize + 1) * self.len]
    }
}

/// Reusable column buffers, one pair per worker.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    h: Vec<i32>,
    e: Vec<i32>,
}

/// Best local score of the profiled query against an encoded subject.
pub fn score_encoded(profile: &QueryProfile, subject: &[u8], scheme: &ScoringScheme, scratch: &mut Scratch) -> i32 {
    let m = profile.len();
    let (open, ext) = (scheme.gap_open, scheme.gap_extend);
    // Low enough never to win, high enough not to overflow after subtraction.
    let floor = i32::MIN / 4;
    scratch.h.clear();
    scratch.h.resize(m, 0);
    scratch.e.clear();
    scratch.e.resize(m, floor);
    let (h, e) = (&mut scratch.h[..], &mut scratch.e[..]);

    let mut best = 0;
    for &s in subject {
        let row = profile.row(s);
        let mut diag = 0;
        let mut left = 0;
        let mut f = floor;
        for j in 0..m {
            let up = h[j];
            let ej = (e[j] - ext).max(up - open);
            f = (f - ext).max(left - open);
            let hj = (diag + row[j]).max(ej).max(f).max(0);
            diag = up;
            e[j] = ej;
            h[j] = hj;
            left = hj;
            best = best.max(hj);
        }
    }
    best
}

/// Convenience wrapper taking raw residue strings.
pub fn sw_score_raw(query: &[u8], subject: &[u8], scheme: &ScoringScheme) -> i32 {
    let profile = QueryProfile::new(query, scheme);
    let subject = scheme.matrix.encode(subject);
    score_encoded(&profile, &subject, scheme, &mut Scratch::default())
}
