use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::config::SplitRatios;
use crate::error::{Error, Result};
use crate::rng;

/// Record indices of the three partitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Validation and test sizes round down; the remainder goes to training.
fn sizes(n: usize, ratios: &SplitRatios) -> Result<(usize, usize)> {
    let (_, val, test) = ratios.normalized()?;
    let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    Ok((floor(val), floor(test)))
}

fn partition(mut order: Vec<usize>, ratios: &SplitRatios) -> Result<Split> {
    let (nv, nt) = sizes(order.len(), ratios)?;
    let test = order.split_off(order.len() - nt);
    let val = order.split_off(order.len() - nv);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

/// Seeded shuffle, then partition. With `labels`, each label's records are
/// split separately and the parts concatenated in label order.
pub fn split_dataset(
    n: usize,
    ratios: &SplitRatios,
    seed: u64,
    labels: Option<&[u32]>,
) -> Result<Split> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut r = rng::stream(seed, "split", 0);
    match labels {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut r);
            partition(order, ratios)
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::Config(format!(
                    "{} labels for {} records",
                    labels.len(),
                    n
                )));
            }
            let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                groups.entry(l).or_default().push(i);
            }
            let mut out = Split {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            for mut members in groups.into_values() {
                members.shuffle(&mut r);
                let s = partition(members, ratios)?;
                out.train.extend(s.train);
                out.val.extend(s.val);
                out.test.extend(s.test);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lens(s: &Split) -> (usize, usize, usize) {
        (s.train.len(), s.val.len(), s.test.len())
    }

    #[test]
    fn sizes_follow_the_remainder_rule() {
        let r = SplitRatios::default();
        assert_eq!(lens(&split_dataset(10, &r, 0, None).unwrap()), (6, 2, 2));
        assert_eq!(lens(&split_dataset(11, &r, 0, None).unwrap()), (7, 2, 2));
        assert_eq!(lens(&split_dataset(1, &r, 0, None).unwrap()), (1, 0, 0));
        assert!(matches!(
            split_dataset(0, &r, 0, None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn seeded() {
        let r = SplitRatios::default();
        assert_eq!(
            split_dataset(50, &r, 3, None).unwrap(),
            split_dataset(50, &r, 3, None).unwrap()
        );
        assert_ne!(
            split_dataset(50, &r, 3, None).unwrap(),
            split_dataset(50, &r, 4, None).unwrap()
        );
    }

    #[test]
    fn stratified_split_balances_labels() {
        let labels: Vec<u32> = (0..100).map(|i| (i % 4) as u32).collect();
        let s = split_dataset(100, &SplitRatios::default(), 1, Some(&labels)).unwrap();
        for part in [&s.val, &s.test] {
            for l in 0..4 {
                assert_eq!(part.iter().filter(|&&i| labels[i] == l).count(), 5);
            }
        }
    }

    proptest! {
        #[test]
        fn disjoint_and_exhaustive(n in 1usize..300, seed in 0u64..1000, stratify in any::<bool>()) {
            let labels: Vec<u32> = (0..n).map(|i| (i % 7) as u32).collect();
            let s = split_dataset(n, &SplitRatios::default(), seed, stratify.then_some(labels.as_slice())).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
