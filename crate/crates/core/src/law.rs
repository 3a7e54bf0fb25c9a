//! The joint sparsity scaling law
//!
//! ```text
//! L(S, N, D) = (a_S (1 - S)^b_S + c_S) * N^-b_N + (a_D / D)^b_D + c
//! ```
//!
//! together with the run/sweep data model and closed-form inversions of the
//! law in `D` and in `N`. At `S = 0` the law reduces to the dense form
//! `(a_N / N)^b_N + (a_D / D)^b_D + c` with `a_N^b_N = a_S + c_S`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_sparsity, Error, Result};

/// Label used for unstructured (per-weight) sparsity.
pub const UNSTRUCTURED: &str = "unstructured";

/// The seven free parameters of the joint law plus family/pattern labels.
///
/// Serializes to a JSON object with exactly the fields `a_S, b_S, c_S, b_N,
/// a_D, b_D, c, family, pattern`. Deserialization validates the positivity
/// invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientsDoc")]
pub struct ScalingLawCoefficients {
    #[serde(rename = "a_S")]
    pub a_s: f64,
    #[serde(rename = "b_S")]
    pub b_s: f64,
    #[serde(rename = "c_S")]
    pub c_s: f64,
    #[serde(rename = "b_N")]
    pub b_n: f64,
    #[serde(rename = "a_D")]
    pub a_d: f64,
    #[serde(rename = "b_D")]
    pub b_d: f64,
    pub c: f64,
    pub family: String,
    pub pattern: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsDoc {
    #[serde(default)]
    format_version: Option<u32>,
    #[serde(rename = "a_S")]
    a_s: f64,
    #[serde(rename = "b_S")]
    b_s: f64,
    #[serde(rename = "c_S")]
    c_s: f64,
    #[serde(rename = "b_N")]
    b_n: f64,
    #[serde(rename = "a_D")]
    a_d: f64,
    #[serde(rename = "b_D")]
    b_d: f64,
    c: f64,
    family: String,
    pattern: String,
}

impl TryFrom<CoefficientsDoc> for ScalingLawCoefficients {
    type Error = Error;

    fn try_from(doc: CoefficientsDoc) -> Result<Self> {
        if let Some(v) = doc.format_version {
            if v != 1 {
                return Err(Error::InvalidInput(format!(
                    "unsupported coefficients format_version {v}"
                )));
            }
        }
        let coeffs = ScalingLawCoefficients {
            a_s: doc.a_s,
            b_s: doc.b_s,
            c_s: doc.c_s,
            b_n: doc.b_n,
            a_d: doc.a_d,
            b_d: doc.b_d,
            c: doc.c,
            family: doc.family,
            pattern: doc.pattern,
        };
        coeffs.validate()?;
        Ok(coeffs)
    }
}

impl ScalingLawCoefficients {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_s: f64,
        b_s: f64,
        c_s: f64,
        b_n: f64,
        a_d: f64,
        b_d: f64,
        c: f64,
        family: impl Into<String>,
        pattern: impl Into<String>,
    ) -> Result<Self> {
        let coeffs = ScalingLawCoefficients {
            a_s,
            b_s,
            c_s,
            b_n,
            a_d,
            b_d,
            c,
            family: family.into(),
            pattern: pattern.into(),
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    /// Fitted ViT on JFT-4B coefficients (`D` counted in images).
    pub fn vit_jft() -> Self {
        Self::new(2.94e2, 0.821, 4.68e2, 0.392, 2.37e8, 0.890, 4.517, "vit-jft", UNSTRUCTURED)
            .expect("static coefficients are valid")
    }

    /// Fitted T5 on C4 coefficients (`D` counted in tokens).
    pub fn t5_c4() -> Self {
        Self::new(1.68e1, 0.722, 4.50e1, 0.245, 6.90e8, 0.203, 0.651, "t5-c4", UNSTRUCTURED)
            .expect("static coefficients are valid")
    }

    /// T5/C4 n:m refit: only the sparsity term differs from [`Self::t5_c4`].
    pub fn t5_c4_nm() -> Self {
        let dense = Self::t5_c4();
        Self {
            a_s: 8.64e1,
            b_s: 2.752,
            c_s: 5.36e2,
            pattern: "n:m".to_string(),
            ..dense
        }
    }

    /// Looks up one of the published coefficient sets by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "vit-jft" | "vit" => Some(Self::vit_jft()),
            "t5-c4" | "t5" => Some(Self::t5_c4()),
            "t5-c4-nm" | "t5-nm" => Some(Self::t5_c4_nm()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_S", self.a_s),
            ("b_S", self.b_s),
            ("b_N", self.b_n),
            ("a_D", self.a_d),
            ("b_D", self.b_d),
        ];
        for (name, v) in positive {
            check_positive(name, v)?;
        }
        for (name, v) in [("c_S", self.c_s), ("c", self.c)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `a_N` of the dense law, recovered from `a_N^b_N = a_S + c_S`.
    pub fn dense_size_coefficient(&self) -> f64 {
        (self.a_s + self.c_s).powf(1.0 / self.b_n)
    }

    /// The sparsity factor `a_S (1 - S)^b_S + c_S`.
    pub(crate) fn sparsity_factor(&self, s: f64) -> f64 {
        self.a_s * (1.0 - s).powf(self.b_s) + self.c_s
    }

    pub(crate) fn data_term_unchecked(&self, d: f64) -> f64 {
        (self.a_d / d).powf(self.b_d)
    }

    pub(crate) fn eval_unchecked(&self, s: f64, n: f64, d: f64) -> f64 {
        self.sparsity_factor(s) * n.powf(-self.b_n) + self.data_term_unchecked(d) + self.c
    }
}

/// The data-independent summand `(a_S (1 - S)^b_S + c_S) N^-b_N`.
pub fn capacity_term(coeffs: &ScalingLawCoefficients, s: f64, n: f64) -> Result<f64> {
    check_sparsity(s)?;
    check_positive("N", n)?;
    Ok(coeffs.sparsity_factor(s) * n.powf(-coeffs.b_n))
}

/// The summand `(a_D / D)^b_D`.
pub fn data_term(coeffs: &ScalingLawCoefficients, d: f64) -> Result<f64> {
    check_positive("D", d)?;
    Ok(coeffs.data_term_unchecked(d))
}

/// Evaluates `L(S, N, D)`.
pub fn eval_law(coeffs: &ScalingLawCoefficients, s: f64, n: f64, d: f64) -> Result<f64> {
    check_sparsity(s)?;
    check_positive("N", n)?;
    check_positive("D", d)?;
    Ok(coeffs.eval_unchecked(s, n, d))
}

/// Multiplier on dense parameter count that matches the capacity term of a
/// model at sparsity `s`.
pub fn gain(coeffs: &ScalingLawCoefficients, s: f64) -> Result<f64> {
    check_sparsity(s)?;
    let ratio = coeffs.sparsity_factor(s) / (coeffs.a_s + coeffs.c_s);
    Ok(ratio.powf(-1.0 / coeffs.b_n))
}

/// Solves `L(S, N, D) = loss` for `D`.
pub fn invert_for_data(coeffs: &ScalingLawCoefficients, loss: f64, s: f64, n: f64) -> Result<f64> {
    check_positive("L", loss)?;
    let capacity = capacity_term(coeffs, s, n)?;
    let remaining = (loss - coeffs.c) - capacity;
    let floor = capacity + coeffs.c;
    if remaining <= 0.0 || !remaining.is_finite() {
        return Err(Error::UnreachableLoss {
            target: loss,
            floor,
        });
    }
    Ok(coeffs.a_d * remaining.powf(-1.0 / coeffs.b_d))
}

/// Solves `L(S, N, D) = loss` for `N`.
pub fn invert_for_size(coeffs: &ScalingLawCoefficients, loss: f64, s: f64, d: f64) -> Result<f64> {
    check_positive("L", loss)?;
    check_sparsity(s)?;
    let data = data_term(coeffs, d)?;
    let remaining = (loss - coeffs.c) - data;
    let floor = data + coeffs.c;
    if remaining <= 0.0 || !remaining.is_finite() {
        return Err(Error::UnreachableLoss {
            target: loss,
            floor,
        });
    }
    Ok((coeffs.sparsity_factor(s) / remaining).powf(1.0 / coeffs.b_n))
}

/// One observed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sparsity: f64,
    pub nonzero_params: f64,
    pub data: f64,
    pub loss: f64,
    pub pattern: String,
}

impl RunRecord {
    pub fn new(sparsity: f64, nonzero_params: f64, data: f64, loss: f64, pattern: impl Into<String>) -> Result<Self> {
        let record = RunRecord {
            sparsity,
            nonzero_params,
            data,
            loss,
            pattern: pattern.into(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        check_sparsity(self.sparsity)?;
        check_positive("nonzero_params", self.nonzero_params)?;
        check_positive("data", self.data)?;
        check_positive("loss", self.loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataUnit {
    Images,
    Tokens,
    #[default]
    Unspecified,
}

impl DataUnit {
    /// Unit implied by a family label: `vit*` counts images, `t5*` tokens.
    pub fn for_family(family: &str) -> Self {
        if family.starts_with("vit") {
            DataUnit::Images
        } else if family.starts_with("t5") {
            DataUnit::Tokens
        } else {
            DataUnit::Unspecified
        }
    }
}

/// A non-empty collection of runs from a single model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDataset {
    pub records: Vec<RunRecord>,
    pub family: String,
    pub data_unit: DataUnit,
}

impl SweepDataset {
    pub fn new(records: Vec<RunRecord>, family: impl Into<String>, data_unit: DataUnit) -> Result<Self> {
        let ds = SweepDataset {
            records,
            family: family.into(),
            data_unit,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::InvalidInput("sweep dataset is empty".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            r.validate()
                .map_err(|e| Error::InvalidInput(format!("record {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Pattern label shared by the records, or the first one seen.
    pub fn pattern(&self) -> &str {
        self.records
            .first()
            .map(|r| r.pattern.as_str())
            .unwrap_or(UNSTRUCTURED)
    }

    /// Keeps only the records matching `keep`, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(usize, &RunRecord) -> bool) -> Result<Self> {
        let records = self
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| r.clone())
            .collect();
        SweepDataset::new(records, self.family.clone(), self.data_unit)
    }
}
