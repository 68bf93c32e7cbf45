//! Vote-matrix aggregation by counting.

/// `(mean vote sum, percentage of rows with at least four positive votes)`.
pub fn brute_judgments(matrix: &[Vec<u8>]) -> (f64, f64) {
    let mut total = 0u64;
    let mut included = 0u64;
    for row in matrix {
        let mut yes = 0u64;
        for &v in row {
            if v == 1 {
                yes += 1;
            }
        }
        total += yes;
        if yes >= 4 {
            included += 1;
        }
    }
    let n = matrix.len() as f64;
    (total as f64 / n, 100.0 * included as f64 / n)
}
