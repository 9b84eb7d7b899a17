//! The squared-correlation fairness measure, utility metrics and proxy
//! adequacy.
//!
//! Fairness of a fitted model is summarized by `ρ²(T, W)`: T is the
//! prediction (or `P(Y = 1 | X)` for a binary outcome) and W is the
//! sensitive attribute itself when it is continuous, or an estimate of
//! `P(S = 1 | X)` when it is an indicator. One value is reported per
//! sensitive column.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::knn::{KnnModel, DEFAULT_K};
use crate::linear::fit_closed_form_arrays;
use crate::model::Predictor;
use crate::stats;
use crate::tabular::{Dataset, OutcomeKind, SensitiveKind};

/// Ridge added to every coefficient of the linear-probability auxiliary
/// model, per training row. Small enough not to matter for well-posed
/// designs, large enough to absorb one-hot collinearity.
const AUX_RIDGE_PER_ROW: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TSource {
    Prediction,
    PositiveProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum WSource {
    Sensitive,
    Knn { k: usize },
    LinearProbability,
}

/// Estimator of `P(S = 1 | X)` for indicator sensitive columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AuxFamily {
    Knn {
        #[serde(default = "default_aux_k")]
        k: usize,
    },
    LinearProbability,
}

fn default_aux_k() -> usize {
    DEFAULT_K
}

impl Default for AuxFamily {
    fn default() -> Self {
        AuxFamily::Knn { k: DEFAULT_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePair {
    pub t: Array1<f64>,
    pub w: Array1<f64>,
    pub t_source: TSource,
    pub w_source: WSource,
}

impl SurrogatePair {
    pub fn new(t: Array1<f64>, w: Array1<f64>, t_source: TSource, w_source: WSource) -> Result<Self> {
        check_pair(t.view(), w.view())?;
        Ok(SurrogatePair {
            t,
            w,
            t_source,
            w_source,
        })
    }

    pub fn rho_squared(&self) -> Result<f64> {
        rho_squared(self.t.view(), self.w.view())
    }
}

fn check_pair(t: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<()> {
    if t.len() != w.len() {
        return Err(EdfError::LengthMismatch {
            left: t.len(),
            right: w.len(),
        });
    }
    if t.len() < 3 {
        return Err(EdfError::TooFewValues {
            needed: 3,
            found: t.len(),
        });
    }
    if t.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(EdfError::InvalidParameter("surrogates must be finite".into()));
    }
    Ok(())
}

/// T on the evaluation rows: predictions for a continuous outcome,
/// unrounded `P(Y = 1 | X)` for a binary one.
pub fn build_t(model: &dyn Predictor, eval: &Dataset) -> Result<(Array1<f64>, TSource)> {
    match eval.y_kind() {
        OutcomeKind::Continuous => Ok((model.predict_mean(eval.x(), eval.s())?, TSource::Prediction)),
        OutcomeKind::Binary => Ok((
            model.predict_positive(eval.x(), eval.s())?,
            TSource::PositiveProbability,
        )),
    }
}

/// W on the evaluation rows for sensitive column `index`. Auxiliary models
/// are fit on `train` only.
pub fn build_w(
    train: &Dataset,
    eval: &Dataset,
    index: usize,
    aux: AuxFamily,
) -> Result<(Array1<f64>, WSource)> {
    let Some(col) = eval.sensitive().get(index) else {
        return Err(EdfError::InvalidParameter(format!(
            "sensitive index {index} out of range ({} columns)",
            eval.n_sensitive()
        )));
    };
    if index >= train.n_sensitive() {
        return Err(EdfError::DimensionMismatch {
            expected: eval.n_sensitive(),
            found: train.n_sensitive(),
        });
    }
    let s_eval = eval.s().index_axis_move(Axis(1), index);
    if is_constant(s_eval) {
        return Err(EdfError::DegenerateSensitive(col.name.clone()));
    }
    if col.kind == SensitiveKind::Continuous {
        return Ok((s_eval.to_owned(), WSource::Sensitive));
    }
    let s_train = train.s().index_axis_move(Axis(1), index);
    if is_constant(s_train) {
        return Err(EdfError::DegenerateSensitive(col.name.clone()));
    }
    match aux {
        AuxFamily::Knn { k } => {
            let k = k.min(train.n_rows());
            let model = KnnModel::from_parts(
                train.x().to_owned(),
                s_train.to_owned(),
                vec![1.0; train.n_features()],
                k,
                OutcomeKind::Binary,
            )?;
            Ok((model.predict(eval.x())?, WSource::Knn { k }))
        }
        AuxFamily::LinearProbability => {
            let d = Array1::from_elem(
                train.n_features(),
                (AUX_RIDGE_PER_ROW * train.n_rows() as f64).sqrt(),
            );
            let model = fit_closed_form_arrays(train.x(), s_train, d.view())?;
            let w = model.predict(eval.x())?.mapv(|v| v.clamp(0.0, 1.0));
            Ok((w, WSource::LinearProbability))
        }
    }
}

fn is_constant(v: ArrayView1<f64>) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Squared Pearson correlation, in [0, 1].
pub fn rho_squared(t: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<f64> {
    check_pair(t, w)?;
    let (t, w) = (t.to_vec(), w.to_vec());
    stats::pearson(&t, &w)
        .map(|r| (r * r).min(1.0))
        .ok_or(EdfError::ConstantInput)
}

/// Mean absolute prediction error, `mean |y − ŷ|`.
pub fn mape(y_true: ArrayView1<f64>, y_pred: ArrayView1<f64>) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let total: f64 = y_true.iter().zip(y_pred.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / y_true.len() as f64)
}

/// Overall probability of misclassification when predicting 1 for
/// `proba >= threshold`.
pub fn opm(y_true: ArrayView1<f64>, proba: ArrayView1<f64>, threshold: f64) -> Result<f64> {
    check_lengths(y_true, proba)?;
    let wrong = y_true
        .iter()
        .zip(proba.iter())
        .filter(|(y, p)| {
            let label = if **p >= threshold { 1.0 } else { 0.0 };
            label != **y
        })
        .count();
    Ok(wrong as f64 / y_true.len() as f64)
}

fn check_lengths(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(EdfError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EdfError::EmptyInput);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRho {
    pub category: String,
    pub rho_squared: f64,
}

/// ρ² between two sets of fitted values within each level of a 0/1
/// sensitive indicator. Labels are `{name}.0` and `{name}.1`.
pub fn proxy_adequacy(
    full: ArrayView1<f64>,
    edf: ArrayView1<f64>,
    indicator: ArrayView1<f64>,
    name: &str,
) -> Result<Vec<CategoryRho>> {
    check_lengths(full, edf)?;
    check_lengths(full, indicator)?;
    if indicator.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EdfError::InvalidParameter(format!(
            "proxy adequacy needs a 0/1 indicator for `{name}`"
        )));
    }
    let mut out = Vec::with_capacity(2);
    for level in [0.0, 1.0] {
        let rows: Vec<usize> = (0..indicator.len()).filter(|&i| indicator[i] == level).collect();
        let a = Array1::from_iter(rows.iter().map(|&i| full[i]));
        let b = Array1::from_iter(rows.iter().map(|&i| edf[i]));
        out.push(CategoryRho {
            category: format!("{name}.{}", level as u8),
            rho_squared: rho_squared(a.view(), b.view())?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UtilityMetric {
    #[serde(rename = "MAPE")]
    Mape,
    #[serde(rename = "OPM")]
    Opm,
}

impl UtilityMetric {
    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Continuous => UtilityMetric::Mape,
            OutcomeKind::Binary => UtilityMetric::Opm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            UtilityMetric::Mape => "MAPE",
            UtilityMetric::Opm => "OPM",
        }
    }

    /// Table formatting: MAPE with 2 decimals, OPM with 4.
    pub fn format(self, value: f64) -> String {
        match self {
            UtilityMetric::Mape => format!("{value:.2}"),
            UtilityMetric::Opm => format!("{value:.4}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utility {
    pub metric: UtilityMetric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub per_category: Vec<CategoryRho>,
    pub utility: Utility,
    pub n_eval: usize,
    pub t_source: TSource,
    pub w_sources: Vec<WSource>,
    /// Always `holdout` for reports built by [`evaluate`] on a split.
    pub evaluated_on: String,
}

/// Fairness and utility of `model` on `eval`, with auxiliary W models fit on
/// `train`.
pub fn evaluate(model: &dyn Predictor, train: &Dataset, eval: &Dataset, aux: AuxFamily) -> Result<FairnessReport> {
    evaluate_labeled(model, train, eval, aux, "holdout")
}

pub fn evaluate_labeled(
    model: &dyn Predictor,
    train: &Dataset,
    eval: &Dataset,
    aux: AuxFamily,
    evaluated_on: &str,
) -> Result<FairnessReport> {
    if eval.n_sensitive() == 0 {
        return Err(EdfError::InvalidParameter(
            "fairness evaluation needs at least one sensitive column".into(),
        ));
    }
    let (t, t_source) = build_t(model, eval)?;
    let metric = UtilityMetric::for_outcome(eval.y_kind());
    let value = match metric {
        UtilityMetric::Mape => mape(eval.y(), t.view())?,
        UtilityMetric::Opm => opm(eval.y(), t.view(), 0.5)?,
    };
    let mut per_category = Vec::with_capacity(eval.n_sensitive());
    let mut w_sources = Vec::with_capacity(eval.n_sensitive());
    for (j, col) in eval.sensitive().iter().enumerate() {
        let (w, w_source) = build_w(train, eval, j, aux)?;
        let pair = SurrogatePair::new(t.clone(), w, t_source, w_source)?;
        per_category.push(CategoryRho {
            category: col.name.clone(),
            rho_squared: pair.rho_squared()?,
        });
        w_sources.push(w_source);
    }
    Ok(FairnessReport {
        per_category,
        utility: Utility { metric, value },
        n_eval: eval.n_rows(),
        t_source,
        w_sources,
        evaluated_on: evaluated_on.to_string(),
    })
}

/// `rho^2` for a single category, `rho^2 <label>` otherwise.
pub(crate) fn rho_headers(categories: &[String]) -> Vec<String> {
    if categories.len() == 1 {
        vec!["rho^2".to_string()]
    } else {
        categories.iter().map(|c| format!("rho^2 {c}")).collect()
    }
}

/// Right-aligned columns separated by ` | `.
pub(crate) fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", parts.join(" | "));
    };
    line(header, &mut out);
    for row in rows {
        line(row, &mut out);
    }
    out
}

impl FairnessReport {
    pub fn categories(&self) -> Vec<String> {
        self.per_category.iter().map(|c| c.category.clone()).collect()
    }

    pub fn to_table(&self) -> String {
        let mut header = vec![self.utility.metric.label().to_string()];
        header.extend(rho_headers(&self.categories()));
        let mut row = vec![self.utility.metric.format(self.utility.value)];
        row.extend(self.per_category.iter().map(|c| format!("{:.4}", c.rho_squared)));
        render_table(&header, &[row])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn rho_basic_cases() {
        let t = array![1.0, 2.0, 4.0, 3.0];
        assert!((rho_squared(t.view(), t.view()).unwrap() - 1.0).abs() < 1e-15);
        let neg = t.mapv(|v| -v);
        assert!((rho_squared(t.view(), neg.view()).unwrap() - 1.0).abs() < 1e-15);
        let c = array![2.0, 2.0, 2.0, 2.0];
        assert!(matches!(rho_squared(t.view(), c.view()), Err(EdfError::ConstantInput)));
        assert!(matches!(
            rho_squared(array![1.0, 2.0].view(), array![2.0, 1.0].view()),
            Err(EdfError::TooFewValues { .. })
        ));
    }

    #[test]
    fn utility_examples() {
        assert_eq!(mape(array![10.0, 20.0].view(), array![12.0, 16.0].view()).unwrap(), 3.0);
        assert_eq!(opm(array![0.0, 1.0].view(), array![0.4, 0.4].view(), 0.5).unwrap(), 0.5);
        let y = array![0.0, 1.0, 1.0];
        assert_eq!(opm(y.view(), y.view(), 0.5).unwrap(), 0.0);
        assert_eq!(mape(y.view(), y.view()).unwrap(), 0.0);
        assert!(matches!(
            mape(array![].view(), array![].view()),
            Err(EdfError::EmptyInput)
        ));
        assert!(opm(y.view(), array![0.5].view(), 0.5).is_err());
    }

    #[test]
    fn proxy_adequacy_identical_values() {
        let v = array![1.0, 3.0, 2.0, 5.0, 0.5, 4.0, 7.0];
        let s = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let r = proxy_adequacy(v.view(), v.view(), s.view(), "black").unwrap();
        assert_eq!(r[0].category, "black.0");
        assert_eq!(r[1].category, "black.1");
        assert!(r.iter().all(|c| (c.rho_squared - 1.0).abs() < 1e-15));
        let small = array![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(proxy_adequacy(v.view(), v.view(), small.view(), "black").is_err());
    }

    struct Fixed(Array1<f64>);

    impl Predictor for Fixed {
        fn predict_mean(&self, _x: ndarray::ArrayView2<f64>, _s: ndarray::ArrayView2<f64>) -> Result<Array1<f64>> {
            Ok(self.0.clone())
        }
    }

    fn tiny(y: Array1<f64>, s: Array2<f64>) -> Dataset {
        let n = y.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        Dataset::from_numeric(x, y, s, vec![false]).unwrap()
    }

    #[test]
    fn binary_outcome_requires_probabilities() {
        let d = tiny(array![0.0, 1.0, 1.0, 0.0], array![[0.0], [1.0], [1.0], [0.0]]);
        let m = Fixed(array![0.1, 0.9, 0.8, 0.2]);
        assert!(matches!(build_t(&m, &d), Err(EdfError::NoProbabilityOutput)));
    }

    #[test]
    fn continuous_sensitive_is_used_verbatim() {
        let s = array![[0.3], [1.7], [-2.0], [0.4]];
        let d = tiny(array![1.0, 2.0, 0.5, 3.0], s.clone());
        let (w, src) = build_w(&d, &d, 0, AuxFamily::default()).unwrap();
        assert_eq!(src, WSource::Sensitive);
        assert_eq!(w, s.column(0).to_owned());
    }

    #[test]
    fn single_valued_sensitive_rejected() {
        let d = tiny(array![1.0, 2.0, 0.5, 3.0], Array2::zeros((4, 1)));
        assert!(matches!(
            build_w(&d, &d, 0, AuxFamily::default()),
            Err(EdfError::DegenerateSensitive(_))
        ));
    }

    #[test]
    fn report_from_constant_pair_rho_one() {
        let s = array![[0.3], [1.7], [-2.0], [0.4]];
        let d = tiny(array![1.0, 2.0, 0.5, 3.0], s.clone());
        let m = Fixed(s.column(0).mapv(|v| 2.0 * v + 1.0));
        let r = evaluate(&m, &d, &d, AuxFamily::default()).unwrap();
        assert_eq!(r.per_category.len(), 1);
        assert!(r.to_table().contains("1.0000"));
        let table = r.to_table();
        let lines: Vec<&str> = table.lines().collect();
        let head: Vec<&str> = lines[0].split('|').map(str::trim).collect();
        assert_eq!(head, vec!["MAPE", "rho^2"]);
    }

    #[test]
    fn table_alignment() {
        let t = render_table(
            &["deweight".into(), "MAPE".into()],
            &[vec!["1.00".into(), "25631.21".into()]],
        );
        assert_eq!(t, "deweight |     MAPE\n    1.00 | 25631.21\n");
    }
}
