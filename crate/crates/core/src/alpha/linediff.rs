/// Lines present only in `new` and only in `old`, from a longest common
/// subsequence over whole lines. Returns `(added, deleted)`.
pub fn line_changes(old: &str, new: &str) -> (u64, u64) {
    let a: Vec<&str> = old.lines().collect();
    let b: Vec<&str> = new.lines().collect();
    let common = lcs_len(&a, &b);
    ((b.len() - common) as u64, (a.len() - common) as u64)
}

/// Total changed lines (additions plus deletions).
pub fn changed_loc(old: &str, new: &str) -> u64 {
    let (added, deleted) = line_changes(old, new);
    added + deleted
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    if a.is_empty() || b.is_empty() {
        return prefix + suffix;
    }
    // two-row dynamic program
    let mut prev = vec![0u32; b.len() + 1];
    let mut cur = vec![0u32; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prefix + suffix + prev[b.len()] as usize
}
