//! Reference local-alignment scorer for testing the fast kernel.
//!
//! Cubic-time: every cell considers every possible gap length ending there,
//! so it needs no auxiliary gap matrices and shares no recurrence with the
//! kernel. Use only on short sequences.

/// Best local alignment score of `a` against `b`. `sub` scores a residue
/// pair; a gap of `k` residues costs `open + (k - 1) * extend`.
pub fn brute_force_score(a: &[u8], b: &[u8], sub: impl Fn(u8, u8) -> i32, open: i32, extend: i32) -> i32 {
    let gap = |k: usize| open + (k as i32 - 1) * extend;
    let (n, m) = (a.len(), b.len());
    let mut h = vec![vec![0i32; m + 1]; n + 1];
    let mut best = 0;
    for i in 1..=n {
        for j in 1..=m {
            let mut v = 0.max(h[i - 1][j - 1] + sub(a[i - 1], b[j - 1]));
            for k in 1..=i {
                v = v.max(h[i - k][j] - gap(k));
            }
            for k in 1..=j {
                v = v.max(h[i][j - k] - gap(k));
            }
            h[i][j] = v;
            best = best.max(v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(a: u8, b: u8) -> i32 {
        if a == b {
            2
        } else {
            -1
        }
    }

    #[test]
    fn hand_worked_cases() {
        assert_eq!(brute_force_score(b"", b"ABC", unit, 3, 1), 0);
        assert_eq!(brute_force_score(b"A", b"A", unit, 3, 1), 2);
        assert_eq!(brute_force_score(b"ABC", b"XBX", unit, 3, 1), 2);
        // ACGT vs ACT: one-residue gap (cost 1) beats the mismatch path.
        assert_eq!(brute_force_score(b"ACGT", b"ACT", unit, 1, 1), 5);
        // With a steep gap the best is the plain AC run.
        assert_eq!(brute_force_score(b"ACGT", b"ACT", unit, 5, 1), 4);
        // Two-residue gap: 4 matches (8) minus open 2 + extend 1.
        assert_eq!(brute_force_score(b"AACCGG", b"AAGG", unit, 2, 1), 5);
    }
}
