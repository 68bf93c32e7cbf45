//! Brute-force n-gram multiset intersection.

/// For each n = 1..4: every n-gram of `a` is paired with at most one equal,
/// not yet paired n-gram of `b`, scanning `b` left to right.
pub fn brute_cmm(a: &[String], b: &[String]) -> [u32; 4] {
    let mut out = [0; 4];
    for n in 1..=4 {
        if a.len() < n || b.len() < n {
            continue;
        }
        let mut used = vec![false; b.len() - n + 1];
        for i in 0..=a.len() - n {
            for j in 0..=b.len() - n {
                if !used[j] && (0..n).all(|x| a[i + x] == b[j + x]) {
                    used[j] = true;
                    out[n - 1] += 1;
                    break;
                }
            }
        }
    }
    out
}
