//! k-fold split with one test cell per group in every fold.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CellRecord, Fidelity, LabeledDataset, Stage};
use crate::error::{invalid, Result};
use crate::sampling::stream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_cells: Vec<u32>,
    pub train_cells: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Early-life records of the fold's training cells.
    pub fn train(&self, ds: &LabeledDataset, fold: usize) -> LabeledDataset {
        let cells: HashSet<u32> = self.folds[fold].train_cells.iter().copied().collect();
        ds.filter(|r| is_exp(r) && r.stage == Stage::Early && cells.contains(&r.cell_id))
    }

    /// Early-life records of the training cells, truncated to the first
    /// `per_cell` RPTs of each cell.
    pub fn train_truncated(&self, ds: &LabeledDataset, fold: usize, per_cell: usize) -> Result<LabeledDataset> {
        let train = self.train(ds, fold);
        for &c in &self.folds[fold].train_cells {
            let have = train.records.iter().filter(|r| r.cell_id == c).count();
            if have < per_cell {
                return Err(invalid(format!("cell {c} has {have} early records, {per_cell} requested")));
            }
        }
        let mut order: Vec<&CellRecord> = train.records.iter().collect();
        order.sort_by_key(|r| (r.cell_id, r.rpt_index));
        let mut count: BTreeMap<u32, usize> = BTreeMap::new();
        let keep: HashSet<(u32, u32)> = order
            .into_iter()
            .filter(|r| {
                let n = count.entry(r.cell_id).or_default();
                *n += 1;
                *n <= per_cell
            })
            .map(|r| (r.cell_id, r.rpt_index))
            .collect();
        Ok(train.filter(|r| keep.contains(&(r.cell_id, r.rpt_index))))
    }

    /// Late-life records of the fold's test cells.
    pub fn test(&self, ds: &LabeledDataset, fold: usize) -> LabeledDataset {
        let cells: HashSet<u32> = self.folds[fold].test_cells.iter().copied().collect();
        ds.filter(|r| is_exp(r) && r.stage == Stage::Late && cells.contains(&r.cell_id))
    }
}

fn is_exp(r: &CellRecord) -> bool {
    r.fidelity == Fidelity::ExperimentalSynthetic
}

/// Within each group the cells are shuffled with a seed-keyed stream and the
/// j-th cell goes to fold j.
pub fn make_folds(ds: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid("need at least two folds"));
    }
    let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for id in ds.cell_ids() {
        let g = ds.records.iter().find(|r| r.cell_id == id && is_exp(r)).map(|r| r.group_id).unwrap_or(0);
        groups.entry(g).or_default().push(id);
    }
    if groups.is_empty() {
        return Err(invalid("dataset has no experimental cells"));
    }
    for (g, cells) in &groups {
        if cells.len() != k {
            return Err(invalid(format!(
                "group {g} has {} cells but {k} folds need exactly {k} cells per group",
                cells.len()
            )));
        }
    }
    let mut tests = vec![Vec::new(); k];
    for (g, cells) in &groups {
        let mut cells = cells.clone();
        cells.sort_unstable();
        cells.shuffle(&mut stream(seed, &[4, *g as u64]));
        for (j, c) in cells.into_iter().enumerate() {
            tests[j].push(c);
        }
    }
    let all: Vec<u32> = groups.values().flatten().copied().collect();
    let folds = tests
        .into_iter()
        .map(|mut test_cells| {
            test_cells.sort_unstable();
            let mut train_cells: Vec<u32> = all.iter().copied().filter(|c| !test_cells.contains(c)).collect();
            train_cells.sort_unstable();
            Fold { test_cells, train_cells }
        })
        .collect();
    Ok(FoldPlan { folds })
}
