use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use swfarm::{parse_fasta, run_swfarm, Matrix, ScoringScheme, SwError};

/// Scores every database sequence against a query with affine-gap
/// Smith-Waterman on a parallel farm.
#[derive(Debug, Parser)]
#[command(name = "swfarm", version)]
struct Args {
    /// FASTA file; its first record is the query.
    #[arg(long)]
    query: PathBuf,
    /// FASTA database.
    #[arg(long)]
    db: PathBuf,
    /// `blosum50` or a path to a matrix file in the usual text layout.
    #[arg(long, default_value = "blosum50")]
    matrix: String,
    #[arg(long, default_value_t = 10)]
    gap_open: i32,
    #[arg(long, default_value_t = 2)]
    gap_extend: i32,
    /// Score of a residue missing from the matrix against anything.
    #[arg(long, default_value_t = swfarm::scoring::DEFAULT_WILDCARD, allow_hyphen_values = true)]
    wildcard: i32,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(args: Args) -> Result<(), SwError> {
    let matrix = if args.matrix.eq_ignore_ascii_case("blosum50") {
        Matrix::blosum50_with_wildcard(args.wildcard)
    } else {
        Matrix::from_file(args.matrix.as_ref(), args.wildcard)?
    };
    let scheme = ScoringScheme::new(matrix, args.gap_open, args.gap_extend)?;
    let query = parse_fasta(&args.query)?
        .into_iter()
        .next()
        .ok_or_else(|| SwError::Config(format!("{}: no query sequence", args.query.display())))?;
    let db = parse_fasta(&args.db)?;
    let report = run_swfarm(&query, db, scheme, args.workers)?;
    let (path, written) = match &args.out {
        Some(p) => (
            p.display().to_string(),
            File::create(p).and_then(|f| report.write_tsv(BufWriter::new(f))),
        ),
        None => ("<stdout>".to_string(), report.write_tsv(io::stdout().lock())),
    };
    written.map_err(|source| SwError::Io { path, source })?;
    log::info!("{:.3} GCUPS over {} cells in {:.3}s", report.gcups, report.cells, report.seconds);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("swfarm: {e}");
            ExitCode::from(match e {
                SwError::Integrity(_) => 2,
                _ => 1,
            })
        }
    }
}
