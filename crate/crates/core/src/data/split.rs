//! Seeded, class-stratified partitioning.
//!
//! Within each class the ids are shuffled and the first `floor(rᵢ·n)` go to
//! each split but the last, which takes the remainder. Class 0 is shuffled
//! before class 1, both from the same seeded stream, so the result depends only
//! on the registry order and the seed.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::registry::Registry;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ratios {parts:?} must be positive"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "ratios {parts:?} sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

/// Train / validation / test membership, persisted as the split manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    /// Checks that the three id lists are duplicate-free and pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, ids) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Validation(format!(
                        "id {id:?} appears more than once (found again in {name})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let split: Self = serde_json::from_str(text)?;
        split.ratios.validate()?;
        split.validate()?;
        Ok(split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Number of items a fraction of `n` receives under floor rounding.
fn share(fraction: f64, n: usize) -> usize {
    // the nudge keeps products like 0.7·10 = 6.999… from flooring to 6
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Splits each class of `ids` by `fractions` (the last part takes the remainder).
fn stratify(registry: &Registry, ids: &[&str], fractions: &[f64], seed: u64) -> Vec<Vec<String>> {
    let mut rng = rng::seeded(seed);
    let mut parts = vec![Vec::new(); fractions.len()];
    for class in [0u8, 1u8] {
        let mut members: Vec<&str> = ids
            .iter()
            .copied()
            .filter(|id| registry.label_of(id) == Some(class))
            .collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let mut start = 0;
        for (k, &f) in fractions.iter().enumerate() {
            let take = if k + 1 == fractions.len() {
                n - start
            } else {
                share(f, n).min(n - start)
            };
            parts[k].extend(members[start..start + take].iter().map(|s| s.to_string()));
            start += take;
        }
    }
    parts
}

fn class_counts(registry: &Registry, ids: &[&str]) -> [usize; 2] {
    let mut c = [0; 2];
    for id in ids {
        if let Some(l) = registry.label_of(id) {
            c[l as usize] += 1;
        }
    }
    c
}

/// Stratified train / validation / test split of the whole registry.
pub fn stratified_split(
    registry: &Registry,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    if registry.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty registry".into(),
        ));
    }
    let ids: Vec<&str> = registry.records().iter().map(|r| r.id.as_str()).collect();
    for (class, n) in class_counts(registry, &ids).into_iter().enumerate() {
        if n > 0 && n < 3 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {n} samples; at least 3 are needed"
            )));
        }
    }
    let mut parts = stratify(
        registry,
        &ids,
        &[ratios.train, ratios.validation, ratios.test],
        seed,
    )
    .into_iter();
    Ok(SplitAssignment {
        seed,
        ratios,
        train: parts.next().unwrap_or_default(),
        validation: parts.next().unwrap_or_default(),
        test: parts.next().unwrap_or_default(),
    })
}

/// Stratified 80 / 20 division of the validation ids into the meta-learner's
/// training and validation sets.
pub fn subdivide_validation(
    val_ids: &[String],
    registry: &Registry,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if val_ids.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "{} validation samples cannot be subdivided; at least 5 are needed",
            val_ids.len()
        )));
    }
    let ids: Vec<&str> = val_ids.iter().map(String::as_str).collect();
    if let Some(missing) = ids.iter().find(|id| !registry.contains(id)) {
        return Err(Error::Validation(format!(
            "validation id {missing:?} has no label"
        )));
    }
    let mut parts = stratify(registry, &ids, &[0.8, 0.2], seed).into_iter();
    Ok((
        parts.next().unwrap_or_default(),
        parts.next().unwrap_or_default(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(per_class: usize) -> Registry {
        Registry::from_labels(
            (0..per_class)
                .map(|i| (format!("n{i}"), 0))
                .chain((0..per_class).map(|i| (format!("p{i}"), 1))),
        )
        .unwrap()
    }

    #[test]
    fn full_dataset_sizes() {
        let reg = balanced(3616);
        let s = stratified_split(&reg, SplitRatios::default(), 0).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (5062, 1446, 724)
        );
        let (mt, mv) = subdivide_validation(&s.validation, &reg, 0).unwrap();
        assert_eq!((mt.len(), mv.len()), (1156, 290));
    }

    #[test]
    fn ten_samples_one_class() {
        let reg = Registry::from_labels((0..10).map(|i| (format!("s{i}"), 1))).unwrap();
        let s = stratified_split(&reg, SplitRatios::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (7, 2, 1));
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let (a, b) = subdivide_validation(&ids, &reg, 1).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut union: Vec<_> = a.into_iter().chain(b).collect();
        union.sort();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(union, expected);
    }

    #[test]
    fn seed_changes_membership_not_sizes() {
        let reg = balanced(50);
        let a = stratified_split(&reg, SplitRatios::default(), 1).unwrap();
        let b = stratified_split(&reg, SplitRatios::default(), 2).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        assert_ne!(a.train, b.train);
        assert_eq!(
            a,
            stratified_split(&reg, SplitRatios::default(), 1).unwrap()
        );
    }

    #[test]
    fn argument_errors() {
        let reg = balanced(10);
        let bad = SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(stratified_split(&reg, bad, 0).is_err());
        assert!(stratified_split(&Registry::default(), SplitRatios::default(), 0).is_err());
        let tiny =
            Registry::from_labels([("a", 0), ("b", 0), ("c", 1), ("d", 1), ("e", 1)]).unwrap();
        assert!(stratified_split(&tiny, SplitRatios::default(), 0).is_err());
        let few: Vec<String> = vec!["n0".into(), "n1".into()];
        assert!(subdivide_validation(&few, &reg, 0).is_err());
    }

    #[test]
    fn manifest_round_trip_and_overlap_detection() {
        let reg = balanced(20);
        let s = stratified_split(&reg, SplitRatios::default(), 9).unwrap();
        let text = s.to_json();
        assert_eq!(SplitAssignment::from_json(&text).unwrap(), s);
        let mut broken = s.clone();
        broken.test.push(broken.train[0].clone());
        assert!(SplitAssignment::from_json(&broken.to_json()).is_err());
    }
}
