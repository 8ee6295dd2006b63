//! Plug-in conditional mutual information between predictions and the
//! selector bits of a supersample.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{draw_selector, make_supersample, select_train, LabeledDataset, SelectorMask, Supersample};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::train::RunRecord;

/// Plug-in mutual information (nats) between discrete symbols and bits.
pub fn plugin_mi<S: Ord>(symbols: &[S], u: &[bool]) -> Result<f64> {
    if symbols.len() != u.len() {
        return Err(Error::Input(format!(
            "{} symbols but {} selector bits",
            symbols.len(),
            u.len()
        )));
    }
    if symbols.is_empty() {
        return Err(Error::Input("plug-in MI of an empty sample".into()));
    }
    let mut joint: BTreeMap<(&S, bool), usize> = BTreeMap::new();
    let mut by_symbol: BTreeMap<&S, usize> = BTreeMap::new();
    let mut by_bit = [0usize; 2];
    for (s, &b) in symbols.iter().zip(u) {
        *joint.entry((s, b)).or_default() += 1;
        *by_symbol.entry(s).or_default() += 1;
        by_bit[b as usize] += 1;
    }
    let n = symbols.len() as f64;
    let mi: f64 = joint
        .iter()
        .map(|((s, b), &c)| {
            let c = c as f64;
            let denom = by_symbol[s] as f64 * by_bit[*b as usize] as f64;
            c / n * (c * n / denom).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

/// `sqrt(2 · I / n)` for a total conditional mutual information `I` over
/// `n` indices.
pub fn fcmi_bound(total_cmi: f64, n: usize) -> f64 {
    (2.0 * total_cmi.max(0.0) / n as f64).sqrt()
}

/// Sizes and seed of a supersample protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcmiProtocol {
    /// Number of supersamples.
    pub k1: usize,
    /// Selector draws per supersample.
    pub k2: usize,
    /// Pairs per supersample (training-set size).
    pub n: usize,
    pub seed: u64,
}

impl Default for FcmiProtocol {
    fn default() -> Self {
        Self { k1: 5, k2: 5, n: 1250, seed: 0 }
    }
}

impl FcmiProtocol {
    pub fn validate(&self, pool_len: usize) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 || self.n == 0 {
            return Err(Error::Config("k1, k2 and n must all be positive".into()));
        }
        if 2 * self.n > pool_len {
            return Err(Error::Config(format!(
                "a supersample of {} pairs needs {} pool rows, pool has {pool_len}",
                self.n,
                2 * self.n
            )));
        }
        Ok(())
    }
}

/// One training unit of the protocol.
pub struct FcmiJob<'a> {
    pub supersample_index: usize,
    pub draw_index: usize,
    /// Seed dedicated to this unit's training.
    pub seed: u64,
    pub supersample: &'a Supersample,
    pub selector: &'a SelectorMask,
    pub train: LabeledDataset,
    /// The held-out element of every pair.
    pub held_out: LabeledDataset,
}

/// Predicted labels on both slots of every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmiFit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub record: Option<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmiEstimate {
    /// Mean per-index plug-in MI of each supersample (nats).
    pub per_supersample: Vec<f64>,
    /// Average of `per_supersample`, at most ln 2.
    pub mean_mi: f64,
    /// `n · mean_mi`, the estimated CMI summed over indices.
    pub total_cmi: f64,
    pub bound: f64,
    pub k1: usize,
    pub k2: usize,
    pub n: usize,
}

/// Results of every unit, ordered by `(supersample, draw)`.
#[derive(Debug, Clone)]
pub struct FcmiOutcome {
    pub estimate: FcmiEstimate,
    pub selectors: Vec<Vec<SelectorMask>>,
    pub fits: Vec<Vec<FcmiFit>>,
}

/// Runs `k1 × k2` trainings and estimates the f-CMI of their predictions.
///
/// `fit` trains on `job.train` and predicts both supersample slots. Up to
/// `jobs` units run concurrently; results are merged by index, so the
/// estimate does not depend on `jobs`.
pub fn estimate_fcmi<F>(pool: &LabeledDataset, protocol: &FcmiProtocol, jobs: usize, fit: F) -> Result<FcmiOutcome>
where
    F: Fn(&FcmiJob<'_>) -> Result<FcmiFit> + Sync,
{
    protocol.validate(pool.len())?;
    let n = protocol.n;
    let supersamples = (0..protocol.k1)
        .map(|s| make_supersample(pool, n, derive_seed(protocol.seed, s as u64)))
        .collect::<Result<Vec<_>>>()?;
    let selectors = (0..protocol.k1)
        .map(|s| {
            let base = derive_seed(protocol.seed ^ 0x5e1e_c7, s as u64);
            (0..protocol.k2)
                .map(|d| draw_selector(n, derive_seed(base, d as u64)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let units: Vec<(usize, usize)> = (0..protocol.k1)
        .flat_map(|s| (0..protocol.k2).map(move |d| (s, d)))
        .collect();
    let run_unit = |&(s, d): &(usize, usize)| -> Result<FcmiFit> {
        let ss = &supersamples[s];
        let mask = &selectors[s][d];
        let (train, held_out) = select_train(ss, mask)?;
        let job = FcmiJob {
            supersample_index: s,
            draw_index: d,
            seed: derive_seed(protocol.seed, (s * protocol.k2 + d) as u64 + 1_000_003),
            supersample: ss,
            selector: mask,
            train,
            held_out,
        };
        let out = fit(&job).map_err(|e| Error::Run {
            run: format!("fcmi_s{s}_d{d}"),
            source: Box::new(e),
        })?;
        if out.left.len() != n || out.right.len() != n {
            return Err(Error::Input(format!(
                "fit returned {}/{} predictions for {n} pairs",
                out.left.len(),
                out.right.len()
            )));
        }
        Ok(out)
    };
    let flat: Vec<FcmiFit> = if jobs <= 1 {
        units.iter().map(run_unit).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| units.par_iter().map(run_unit).collect::<Result<_>>())?
    };

    let mut fits: Vec<Vec<FcmiFit>> = Vec::with_capacity(protocol.k1);
    let mut iter = flat.into_iter();
    for _ in 0..protocol.k1 {
        fits.push(iter.by_ref().take(protocol.k2).collect());
    }
    let per_supersample = fits
        .iter()
        .zip(&selectors)
        .map(|(runs, masks)| per_index_mi(runs, masks))
        .collect::<Result<Vec<_>>>()?;
    let mean_mi = per_supersample.iter().sum::<f64>() / protocol.k1 as f64;
    let total_cmi = n as f64 * mean_mi;
    Ok(FcmiOutcome {
        estimate: FcmiEstimate {
            per_supersample,
            mean_mi,
            total_cmi,
            bound: fcmi_bound(total_cmi, n),
            k1: protocol.k1,
            k2: protocol.k2,
            n,
        },
        selectors,
        fits,
    })
}

/// Mean over indices of the plug-in MI between the prediction pair at that
/// index and its selector bit, across draws.
fn per_index_mi(runs: &[FcmiFit], masks: &[SelectorMask]) -> Result<f64> {
    let n = masks[0].len();
    let mut total = 0.0;
    for i in 0..n {
        let symbols: Vec<(usize, usize)> = runs.iter().map(|r| (r.left[i], r.right[i])).collect();
        let bits: Vec<bool> = masks.iter().map(|m| m.bits[i]).collect();
        total += plugin_mi(&symbols, &bits)?;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn constant_symbol_has_zero_mi() {
        assert_eq!(plugin_mi(&[7, 7, 7, 7], &[true, false, true, false]).unwrap(), 0.0);
    }

    #[test]
    fn copied_bit_has_ln2() {
        let u = [true, false, false, true, true, false];
        let s: Vec<u8> = u.iter().map(|&b| b as u8).collect();
        assert!((plugin_mi(&s, &u).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn exact_table() {
        // counts over 20 samples:
        //         u=0  u=1
        //   a      4    2
        //   b      1    5
        //   c      5    3
        let mut symbols = Vec::new();
        let mut bits = Vec::new();
        for (s, c0, c1) in [('a', 4, 2), ('b', 1, 5), ('c', 5, 3)] {
            for _ in 0..c0 {
                symbols.push(s);
                bits.push(false);
            }
            for _ in 0..c1 {
                symbols.push(s);
                bits.push(true);
            }
        }
        let p = [[0.20, 0.10], [0.05, 0.25], [0.25, 0.15]];
        let pu = [0.5, 0.5];
        let mut expect = 0.0;
        for row in p {
            let ps: f64 = row[0] + row[1];
            for (j, &pj) in row.iter().enumerate() {
                expect += pj * (pj / (ps * pu[j])).ln();
            }
        }
        assert!((plugin_mi(&symbols, &bits).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn mi_errors() {
        assert!(plugin_mi::<u8>(&[], &[]).is_err());
        assert!(plugin_mi(&[1], &[true, false]).is_err());
    }

    #[test]
    fn bound_scales_with_n() {
        let b1 = fcmi_bound(10.0, 100);
        let b4 = fcmi_bound(10.0, 400);
        assert!((b1 / b4 - 2.0).abs() < 1e-12);
        assert_eq!(fcmi_bound(0.0, 10), 0.0);
    }
}
