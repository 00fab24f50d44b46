use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Assignment of every sample id to one of `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    assignment: IndexMap<String, usize>,
}

/// Seeded shuffle followed by round-robin assignment, so fold sizes differ
/// by at most one.
pub fn kfold_split<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(
            "kfold_split",
            format!("k must be at least 2, got {k}"),
        ));
    }
    if k > ids.len() {
        return Err(Error::invalid(
            "kfold_split",
            format!("k = {k} exceeds the {} available ids", ids.len()),
        ));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = ids.iter().find(|&id| !seen.insert(id.as_ref())) {
        return Err(Error::invalid(
            "kfold_split",
            format!("duplicate id `{}`", dup.as_ref()),
        ));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    let assignment = ids
        .iter()
        .zip(fold_of)
        .map(|(id, f)| (id.as_ref().to_string(), f))
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.assignment.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn check_fold(&self, fold: usize) -> Result<()> {
        if fold >= self.k {
            return Err(Error::invalid(
                "FoldPlan",
                format!("fold index {fold} out of range for k = {}", self.k),
            ));
        }
        Ok(())
    }

    /// Held-out ids of `fold`, in input order.
    pub fn test_ids(&self, fold: usize) -> Result<Vec<&str>> {
        self.check_fold(fold)?;
        Ok(self
            .iter()
            .filter(|&(_, f)| f == fold)
            .map(|(id, _)| id)
            .collect())
    }

    /// All ids outside `fold`, in input order.
    pub fn train_ids(&self, fold: usize) -> Result<Vec<&str>> {
        self.check_fold(fold)?;
        Ok(self
            .iter()
            .filter(|&(_, f)| f != fold)
            .map(|(id, _)| id)
            .collect())
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for (_, f) in self.iter() {
            sizes[f] += 1;
        }
        sizes
    }

    /// `id<TAB>fold` lines.
    pub fn to_tsv(&self) -> String {
        self.iter().map(|(id, f)| format!("{id}\t{f}\n")).collect()
    }

    pub fn from_tsv(text: &str, seed: u64) -> Result<Self> {
        let mut assignment = IndexMap::new();
        for (n, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let (id, fold) = line.split_once('\t').ok_or_else(|| {
                Error::invalid(
                    "FoldPlan",
                    format!("line {}: expected `id<TAB>fold`", n + 1),
                )
            })?;
            let fold: usize = fold.trim().parse().map_err(|_| {
                Error::invalid(
                    "FoldPlan",
                    format!("line {}: bad fold index `{fold}`", n + 1),
                )
            })?;
            if assignment.insert(id.to_string(), fold).is_some() {
                return Err(Error::invalid(
                    "FoldPlan",
                    format!("line {}: duplicate id `{id}`", n + 1),
                ));
            }
        }
        let k = assignment.values().max().map_or(0, |m| m + 1);
        let plan = FoldPlan {
            k,
            seed,
            assignment,
        };
        if k < 2 || plan.fold_sizes().contains(&0) {
            return Err(Error::invalid(
                "FoldPlan",
                "every fold in 0..k must be non-empty, k ≥ 2",
            ));
        }
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
