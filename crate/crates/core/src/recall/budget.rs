/// Default token estimate: one token per four characters, rounded up.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Greedy rank-prefix selection: takes items in order while the running
/// total stays within `budget`, stopping at the first item that would
/// overflow. Returns the number of items taken and their total size.
pub fn pack_budget<T>(ranked: &[T], budget: usize, token_counter: impl Fn(&T) -> usize) -> (usize, usize) {
    let mut total = 0usize;
    for (i, item) in ranked.iter().enumerate() {
        let t = token_counter(item);
        match total.checked_add(t) {
            Some(next) if next <= budget => total = next,
            _ => return (i, total),
        }
    }
    (ranked.len(), total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(pack_budget(&[10, 10, 10], 25, |x| *x), (2, 20));
        assert_eq!(pack_budget(&[30, 1], 25, |x| *x), (0, 0));
        assert_eq!(pack_budget(&[1, 2], 0, |x| *x), (0, 0));
        assert_eq!(approx_tokens("abcde"), 2);
        assert_eq!(approx_tokens(""), 0);
    }

    proptest! {
        #[test]
        fn maximal_prefix(sizes in prop::collection::vec(0usize..50, 0..30), budget in 0usize..400) {
            let (n, total) = pack_budget(&sizes, budget, |x| *x);
            prop_assert!(total <= budget);
            prop_assert_eq!(total, sizes[..n].iter().sum::<usize>());
            if n < sizes.len() {
                prop_assert!(total + sizes[n] > budget);
            }
        }
    }
}
