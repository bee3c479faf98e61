//! Word-level Levenshtein scoring with substitution/insertion/deletion
//! counts.

/// Counts from one hypothesis/reference alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WerResult {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub errors: usize,
    /// `(S + I + D) / max(1, |ref|)`.
    pub rate: f64,
    pub ref_len: usize,
    /// Set when the reference was empty but the hypothesis was not; the
    /// rate is then computed against a length of one.
    pub empty_ref: bool,
}

/// Unit-cost word alignment. Among minimum-cost alignments the one with the
/// most substitutions is reported, which makes the decomposition canonical
/// and symmetric: swapping the arguments keeps S and swaps I with D.
pub fn wer(hyp: &[&str], reference: &[&str]) -> WerResult {
    let (n, m) = (reference.len(), hyp.len());
    // dp holds (cost, -substitutions), minimized lexicographically.
    let mut dp = vec![(0usize, 0isize); (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 1..=n {
        dp[idx(i, 0)] = (i, 0);
    }
    for j in 1..=m {
        dp[idx(0, j)] = (j, 0);
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = usize::from(reference[i - 1] != hyp[j - 1]);
            let (dc, ds) = dp[idx(i - 1, j - 1)];
            let diag = (dc + sub_cost, ds - sub_cost as isize);
            let (uc, us) = dp[idx(i - 1, j)];
            let del = (uc + 1, us);
            let (lc, ls) = dp[idx(i, j - 1)];
            let ins = (lc + 1, ls);
            dp[idx(i, j)] = diag.min(del).min(ins);
        }
    }
    let (cost, neg_subs) = dp[idx(n, m)];
    let substitutions = (-neg_subs) as usize;
    // I - D = |hyp| - |ref| and I + D = cost - S pin the remaining counts.
    let diff = m as isize - n as isize;
    let rest = (cost - substitutions) as isize;
    let insertions = ((rest + diff) / 2) as usize;
    let deletions = ((rest - diff) / 2) as usize;

    let empty_ref = n == 0 && m > 0;
    WerResult {
        substitutions,
        insertions,
        deletions,
        errors: cost,
        rate: cost as f64 / n.max(1) as f64,
        ref_len: n,
        empty_ref,
    }
}

/// Convenience entry point on whitespace-separated strings.
pub fn wer_strings(hyp: &str, reference: &str) -> WerResult {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    wer(&h, &r)
}
