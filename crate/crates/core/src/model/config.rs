//! TOML model files.
//!
//! ```toml
//! [dims]
//! n1 = 5
//! n2 = 4
//! k1 = 1
//! k2 = 1
//!
//! [prior]
//! values = [[1.0]]
//!
//! [component.1.1]
//! mu_x1 = [0.0, 0.0, 0.0, 0.0, 0.0]   # optional, zeros by default
//! p_c1 = [[...], ...]                   # n1 rows
//! p_c2 = [[...], ...]                   # n2 rows
//! p_1 = [[...], ...]                    # empty or omitted means no columns
//! p_2 = [[...], ...]
//! ```
//!
//! A component may give `sigma_x1`, `sigma_x2`, `sigma_x12` instead of the four factors.
//! Matrices are arrays of rows.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ClassPair, FactorModel, JointComponent, JointGmm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSpec {
    pub n1: usize,
    pub n2: usize,
    pub k1: usize,
    pub k2: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    /// `k1` rows of `k2` probabilities.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_x1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_x2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_c1: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_c2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_1: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_x1: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_x2: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_x12: Option<Vec<Vec<f64>>>,
}

/// On-disk form of a [`JointGmm`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dims: DimsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub component: BTreeMap<String, BTreeMap<String, ComponentSpec>>,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: Option<usize>, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return match ncols {
            Some(c) if c > 0 && nrows > 0 => Err(Error::Config(format!("{what} is empty, expected {nrows}x{c}"))),
            _ => Ok(DMatrix::zeros(nrows, 0)),
        };
    }
    if rows.len() != nrows {
        return Err(Error::Config(format!("{what} has {} rows, expected {nrows}", rows.len())));
    }
    let width = rows[0].len();
    if let Some(c) = ncols {
        if width != c {
            return Err(Error::Config(format!("{what} has {width} columns, expected {c}")));
        }
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Config(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, width, |i, j| rows[i][j]))
}

fn vector(v: &Option<Vec<f64>>, n: usize, what: &str) -> Result<DVector<f64>> {
    match v {
        None => Ok(DVector::zeros(n)),
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Error::Config(format!("{what} has length {}, expected {n}", v.len()))),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ComponentSpec {
    fn build(&self, n1: usize, n2: usize, name: &str) -> Result<JointComponent> {
        let mu1 = vector(&self.mu_x1, n1, &format!("{name}.mu_x1"))?;
        let mu2 = vector(&self.mu_x2, n2, &format!("{name}.mu_x2"))?;
        let has_factor = self.p_c1.is_some() || self.p_c2.is_some() || self.p_1.is_some() || self.p_2.is_some();
        let has_blocks = self.sigma_x1.is_some() || self.sigma_x2.is_some() || self.sigma_x12.is_some();
        match (has_factor, has_blocks) {
            (true, true) => Err(Error::Config(format!("{name} mixes factor and covariance forms"))),
            (false, false) => Err(Error::Config(format!("{name} gives neither factors nor covariance blocks"))),
            (true, false) => {
                let empty = Vec::new();
                let pc1 = matrix(self.p_c1.as_ref().unwrap_or(&empty), n1, None, &format!("{name}.p_c1"))?;
                let pc2 = matrix(self.p_c2.as_ref().unwrap_or(&empty), n2, Some(pc1.ncols()), &format!("{name}.p_c2"))?;
                let p1 = matrix(self.p_1.as_ref().unwrap_or(&empty), n1, None, &format!("{name}.p_1"))?;
                let p2 = matrix(self.p_2.as_ref().unwrap_or(&empty), n2, None, &format!("{name}.p_2"))?;
                JointComponent::from_factors(mu1, mu2, FactorModel::new(pc1, pc2, p1, p2)?)
            }
            (false, true) => {
                let empty = Vec::new();
                let s1 = matrix(self.sigma_x1.as_ref().unwrap_or(&empty), n1, Some(n1), &format!("{name}.sigma_x1"))?;
                let s2 = matrix(self.sigma_x2.as_ref().unwrap_or(&empty), n2, Some(n2), &format!("{name}.sigma_x2"))?;
                let s12 = matrix(self.sigma_x12.as_ref().unwrap_or(&empty), n1, Some(n2), &format!("{name}.sigma_x12"))?;
                JointComponent::from_blocks(mu1, mu2, s1, s2, s12)
            }
        }
    }

    fn from_component(c: &JointComponent) -> Self {
        let nonzero = |v: &DVector<f64>| {
            if v.iter().all(|&x| x == 0.0) {
                None
            } else {
                Some(v.iter().cloned().collect())
            }
        };
        let mut spec = ComponentSpec {
            mu_x1: nonzero(c.mu_x1()),
            mu_x2: nonzero(c.mu_x2()),
            ..Default::default()
        };
        match c.factors() {
            Some(f) => {
                spec.p_c1 = Some(rows_of(&f.p_c1));
                spec.p_c2 = Some(rows_of(&f.p_c2));
                spec.p_1 = Some(rows_of(&f.p_1));
                spec.p_2 = Some(rows_of(&f.p_2));
            }
            None => {
                spec.sigma_x1 = Some(rows_of(c.sigma_x1()));
                spec.sigma_x2 = Some(rows_of(c.sigma_x2()));
                spec.sigma_x12 = Some(rows_of(c.sigma_x12()));
            }
        }
        spec
    }
}

fn parse_label(s: &str, max: usize, what: &str) -> Result<usize> {
    let v: usize = s
        .parse()
        .map_err(|_| Error::Config(format!("{what} label {s:?} is not a positive integer")))?;
    if v == 0 || v > max {
        return Err(Error::Config(format!("{what} label {v} outside 1..={max}")));
    }
    Ok(v)
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<JointGmm> {
        let DimsSpec { n1, n2, k1, k2 } = self.dims;
        if k1 == 0 || k2 == 0 {
            return Err(Error::Config("k1 and k2 must be positive".into()));
        }
        let prior = match &self.prior {
            None => DMatrix::from_element(k1, k2, 1.0 / (k1 * k2) as f64),
            Some(p) => matrix(&p.values, k1, Some(k2), "prior.values")?,
        };
        let mut comps = BTreeMap::new();
        for (i, row) in &self.component {
            let i = parse_label(i, k1, "first class")?;
            for (k, spec) in row {
                let k = parse_label(k, k2, "second class")?;
                let name = format!("component.{i}.{k}");
                comps.insert(ClassPair::new(i, k), spec.build(n1, n2, &name)?);
            }
        }
        JointGmm::new(n1, n2, prior, comps)
    }

    pub fn from_model(model: &JointGmm) -> Self {
        let mut component: BTreeMap<String, BTreeMap<String, ComponentSpec>> = BTreeMap::new();
        for (pair, c) in model.components() {
            component
                .entry(pair.i.to_string())
                .or_default()
                .insert(pair.k.to_string(), ComponentSpec::from_component(c));
        }
        ModelFile {
            dims: DimsSpec {
                n1: model.n1(),
                n2: model.n2(),
                k1: model.k1(),
                k2: model.k2(),
            },
            prior: Some(PriorSpec {
                values: rows_of(&model.prior_matrix()),
            }),
            component,
        }
    }
}

impl JointGmm {
    /// Load a model from a TOML file.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ModelFile::parse(&text)?.build()
    }

    pub fn to_toml(&self) -> Result<String> {
        ModelFile::from_model(self).to_toml()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[dims]
n1 = 2
n2 = 1
k1 = 1
k2 = 2

[prior]
values = [[0.5, 0.5]]

[component.1.1]
p_c1 = [[1.0], [0.0]]
p_c2 = [[2.0]]
p_1 = [[0.0], [1.0]]

[component.1.2]
mu_x1 = [1.0, -1.0]
sigma_x1 = [[2.0, 0.0], [0.0, 1.0]]
sigma_x2 = [[1.0]]
sigma_x12 = [[0.5], [0.0]]
"#;

    #[test]
    fn parses_both_forms() {
        let m = ModelFile::parse(SMALL).unwrap().build().unwrap();
        assert_eq!((m.n1(), m.n2(), m.k1(), m.k2()), (2, 1, 1, 2));
        let c = m.component(ClassPair::new(1, 1)).unwrap();
        assert_eq!(c.factors().unwrap().p_2.shape(), (1, 0));
        assert_eq!(c.sigma_x12()[(0, 0)], 2.0);
        let d = m.component(ClassPair::new(1, 2)).unwrap();
        assert_eq!(d.mu_x1()[1], -1.0);
    }

    #[test]
    fn round_trips_exactly() {
        let m = ModelFile::parse(SMALL).unwrap().build().unwrap();
        let text = m.to_toml().unwrap();
        let back = ModelFile::parse(&text).unwrap().build().unwrap();
        for (p, c) in m.components() {
            let d = back.component(*p).unwrap();
            assert_eq!(c.covariance(), d.covariance());
            assert_eq!(c.mean(), d.mean());
        }
    }

    #[test]
    fn rejects_bad_shapes_and_labels() {
        let bad = SMALL.replace("p_c2 = [[2.0]]", "p_c2 = [[2.0, 1.0]]");
        assert!(ModelFile::parse(&bad).unwrap().build().is_err());
        let bad = SMALL.replace("[component.1.2]", "[component.1.3]");
        assert!(matches!(ModelFile::parse(&bad).unwrap().build(), Err(Error::Config(_))));
        assert!(ModelFile::parse("[dims]\nn1 = 1\n").is_err());
    }
}
