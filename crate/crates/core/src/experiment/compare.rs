use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::eval::{paired_t_test, significant, ForecastMode, MetricReport, PairedTTestResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nd,
    Nrmse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Nd => "nd",
            Metric::Nrmse => "nrmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub model: String,
    pub mode: ForecastMode,
    pub nd: f64,
    pub nrmse: f64,
    /// Best in its row and mode, and significantly better than the runner-up.
    pub nd_dagger: bool,
    pub nrmse_dagger: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// `None` for the average row.
    pub farm: Option<usize>,
    pub cells: Vec<ComparisonCell>,
}

/// A paired t-test between two models of one row, mode and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub farm: Option<usize>,
    pub mode: ForecastMode,
    pub metric: Metric,
    pub a: String,
    pub b: String,
    /// Degenerate or too few pairs gives `None`.
    pub result: Option<PairedTTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub models: Vec<String>,
    pub modes: Vec<ForecastMode>,
    pub farms: Vec<usize>,
    /// Farm rows in ascending farm order, then the average row.
    pub rows: Vec<ComparisonRow>,
    pub tests: Vec<PairwiseTest>,
}

impl Comparison {
    pub fn cell(&self, farm: Option<usize>, model: &str, mode: ForecastMode) -> Option<&ComparisonCell> {
        self.rows
            .iter()
            .find(|r| r.farm == farm)?
            .cells
            .iter()
            .find(|c| c.model == model && c.mode == mode)
    }

    pub fn test(&self, farm: Option<usize>, mode: ForecastMode, metric: Metric, a: &str, b: &str) -> Option<&PairwiseTest> {
        self.tests.iter().find(|t| {
            t.farm == farm && t.mode == mode && t.metric == metric && ((t.a == a && t.b == b) || (t.a == b && t.b == a))
        })
    }
}

fn values(r: &MetricReport, metric: Metric) -> &[f64] {
    match metric {
        Metric::Nd => &r.per_batch_nd,
        Metric::Nrmse => &r.per_batch_nrmse,
    }
}

/// Per-batch values of two reports on the batches both kept.
fn paired(a: &MetricReport, b: &MetricReport, metric: Metric) -> (Vec<f64>, Vec<f64>) {
    let (va, vb) = (values(a, metric), values(b, metric));
    let mut out = (Vec::new(), Vec::new());
    for (i, &batch) in a.batch_index.iter().enumerate() {
        if let Ok(j) = b.batch_index.binary_search(&batch) {
            out.0.push(va[i]);
            out.1.push(vb[j]);
        }
    }
    out
}

fn ttest(a: &[f64], b: &[f64]) -> Option<PairedTTestResult> {
    paired_t_test(a, b).ok().filter(|r| !r.degenerate)
}

/// Lay reports out as farms by (mode, model), add the average row and the
/// significance tests. In every row, mode and metric the lowest value gets a
/// dagger iff a paired t-test against the second lowest has p < 0.05. Farm
/// rows pair per-batch values; the average row pairs per-farm averages.
pub fn compare(reports: &[MetricReport]) -> Result<Comparison> {
    if reports.is_empty() {
        return Err(Error::InsufficientData("no reports to compare".into()));
    }
    let mut models: Vec<String> = Vec::new();
    let mut modes: Vec<ForecastMode> = Vec::new();
    let mut farms: Vec<usize> = Vec::new();
    for r in reports {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
        if !farms.contains(&r.farm) {
            farms.push(r.farm);
        }
    }
    modes.sort();
    farms.sort_unstable();

    let find = |farm: usize, model: &str, mode: ForecastMode| -> Result<&MetricReport> {
        let mut it = reports.iter().filter(|r| r.farm == farm && r.model == model && r.mode == mode);
        let r = it.next().ok_or_else(|| {
            Error::InsufficientData(format!("no report for farm {farm}, {model}, {}", mode.as_str()))
        })?;
        if it.next().is_some() {
            return Err(Error::Config(format!("duplicate report for farm {farm}, {model}, {}", mode.as_str())));
        }
        Ok(r)
    };

    let mut rows = Vec::with_capacity(farms.len() + 1);
    let mut tests = Vec::new();
    let combos: Vec<(ForecastMode, &String)> =
        modes.iter().flat_map(|&m| models.iter().map(move |name| (m, name))).collect();

    for &farm in &farms {
        let mut cells = Vec::with_capacity(combos.len());
        for &(mode, model) in &combos {
            let r = find(farm, model, mode)?;
            cells.push(ComparisonCell {
                model: model.clone(),
                mode,
                nd: r.avg_nd,
                nrmse: r.avg_nrmse,
                nd_dagger: false,
                nrmse_dagger: false,
            });
        }
        let mut row = ComparisonRow { farm: Some(farm), cells };
        for &mode in &modes {
            for metric in [Metric::Nd, Metric::Nrmse] {
                let test = |a: &str, b: &str| -> Result<Option<PairedTTestResult>> {
                    let (x, y) = paired(find(farm, a, mode)?, find(farm, b, mode)?, metric);
                    Ok(ttest(&x, &y))
                };
                mark_row(&mut row, mode, metric, &models, Some(farm), &mut tests, test)?;
            }
        }
        rows.push(row);
    }

    let mut avg_cells = Vec::with_capacity(combos.len());
    for &(mode, model) in &combos {
        let col: Vec<&ComparisonCell> =
            rows.iter().map(|r| r.cells.iter().find(|c| c.mode == mode && &c.model == model).expect("complete grid")).collect();
        let n = col.len() as f64;
        avg_cells.push(ComparisonCell {
            model: model.clone(),
            mode,
            nd: col.iter().map(|c| c.nd).sum::<f64>() / n,
            nrmse: col.iter().map(|c| c.nrmse).sum::<f64>() / n,
            nd_dagger: false,
            nrmse_dagger: false,
        });
    }
    let mut avg = ComparisonRow { farm: None, cells: avg_cells };
    for &mode in &modes {
        for metric in [Metric::Nd, Metric::Nrmse] {
            let farm_values = |model: &str| -> Vec<f64> {
                rows.iter()
                    .map(|r| {
                        let c = r.cells.iter().find(|c| c.mode == mode && c.model == model).expect("complete grid");
                        match metric {
                            Metric::Nd => c.nd,
                            Metric::Nrmse => c.nrmse,
                        }
                    })
                    .collect()
            };
            let test = |a: &str, b: &str| -> Result<Option<PairedTTestResult>> { Ok(ttest(&farm_values(a), &farm_values(b))) };
            mark_row(&mut avg, mode, metric, &models, None, &mut tests, test)?;
        }
    }
    rows.push(avg);
    Ok(Comparison { models, modes, farms, rows, tests })
}

/// Run every pairwise test of one row, mode and metric, then set the dagger.
fn mark_row(
    row: &mut ComparisonRow,
    mode: ForecastMode,
    metric: Metric,
    models: &[String],
    farm: Option<usize>,
    tests: &mut Vec<PairwiseTest>,
    test: impl Fn(&str, &str) -> Result<Option<PairedTTestResult>>,
) -> Result<()> {
    let value = |c: &ComparisonCell| match metric {
        Metric::Nd => c.nd,
        Metric::Nrmse => c.nrmse,
    };
    let mut start = tests.len();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            tests.push(PairwiseTest { farm, mode, metric, a: a.clone(), b: b.clone(), result: test(a, b)? });
        }
    }
    if models.len() < 2 {
        return Ok(());
    }
    // rank by value; first model in column order wins ties
    let mut ranked: Vec<(usize, f64)> = row
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mode == mode)
        .map(|(i, c)| (i, value(c)))
        .collect();
    ranked.sort_by(|x, y| x.1.total_cmp(&y.1));
    let (best, runner) = (ranked[0].0, ranked[1].0);
    let (bn, rn) = (row.cells[best].model.clone(), row.cells[runner].model.clone());
    let result = loop {
        let t = &tests[start];
        if (t.a == bn && t.b == rn) || (t.a == rn && t.b == bn) {
            break t.result;
        }
        start += 1;
    };
    let dagger = result.is_some_and(|r| significant(&r));
    match metric {
        Metric::Nd => row.cells[best].nd_dagger = dagger,
        Metric::Nrmse => row.cells[best].nrmse_dagger = dagger,
    }
    Ok(())
}
