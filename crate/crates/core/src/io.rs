//! CSV ingestion of covariates and responses, and construction of the
//! reference measure.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics;
use crate::problem::{center_columns, LAMBDA_TOL_REL};
use crate::trace::ReferenceInfo;

/// Covariates (centered under uniform weights) and responses read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub b: Array1<f64>,
}

fn column_indices(headers: &csv::StringRecord, names: &[String], flag: &str) -> Result<Vec<usize>> {
    if names.is_empty() {
        return Err(Error::Input(format!("{flag} must name at least one column")));
    }
    names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == name.as_str())
                .ok_or_else(|| Error::Input(format!("{flag}: column `{name}` not found in header")))
        })
        .collect()
}

fn parse_cell(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64> {
    let cell = record
        .get(idx)
        .ok_or_else(|| Error::Input(format!("row {row}: missing value for column `{name}`")))?;
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("row {row}, column `{name}`: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Input(format!("row {row}, column `{name}`: non-finite value")));
    }
    Ok(v)
}

/// Reads the named columns from comma-separated data with a header row.
///
/// Rows are numbered from 1 for the first data line in error messages.
/// Each covariate column is centered to mean zero under uniform weights,
/// and singular covariate second moments are rejected.
pub fn ingest_csv<R: Read>(reader: R, x_cols: &[String], y_cols: &[String]) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(format!("cannot read header: {e}")))?.clone();
    let xi = column_indices(&headers, x_cols, "--x-cols")?;
    let yi = column_indices(&headers, y_cols, "--y-cols")?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Input(format!("row {row}: {e}")))?;
        for (&idx, name) in xi.iter().zip(x_cols) {
            xs.push(parse_cell(&rec, idx, row, name)?);
        }
        for (&idx, name) in yi.iter().zip(y_cols) {
            ys.push(parse_cell(&rec, idx, row, name)?);
        }
        n += 1;
    }
    if n < 2 {
        return Err(Error::Input(format!("need at least 2 data rows, found {n}")));
    }
    let b = Array1::from_elem(n, 1.0 / n as f64);
    let x = Array2::from_shape_vec((n, xi.len()), xs).expect("row-major covariates");
    let y = Array2::from_shape_vec((n, yi.len()), ys).expect("row-major responses");
    let x = center_columns(x, b.view());
    let sigma = numerics::weighted_second_moment(x.view(), b.view());
    let lambda = numerics::min_eigenvalue(&sigma);
    let tol = LAMBDA_TOL_REL * numerics::trace(&sigma);
    if !(lambda > tol) {
        return Err(Error::DegenerateCovariates { lambda, tol });
    }
    Ok(Ingested { x, y, b })
}

pub fn ingest_csv_path(path: &Path, x_cols: &[String], y_cols: &[String]) -> Result<Ingested> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    ingest_csv(file, x_cols, y_cols)
}

/// Reads reference atoms: a header row followed by rows of `d_y` numbers.
pub fn read_reference_csv<R: Read>(reader: R, d_y: usize) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(format!("cannot read header: {e}")))?.clone();
    if headers.len() != d_y {
        return Err(Error::Dimension(format!(
            "reference file has {} columns, responses have dimension {d_y}",
            headers.len()
        )));
    }
    let mut vals = Vec::new();
    let mut m = 0;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Input(format!("row {row}: {e}")))?;
        for (c, name) in headers.iter().enumerate() {
            vals.push(parse_cell(&rec, c, row, name)?);
        }
        m += 1;
    }
    if m == 0 {
        return Err(Error::Input("reference file has no atoms".into()));
    }
    Ok(Array2::from_shape_vec((m, d_y), vals).expect("row-major reference atoms"))
}

/// Source of reference atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceSpec {
    /// `m` uniform draws from `[0, 1]^{d_y}`.
    UniformCube,
    /// `m` standard Gaussian draws in `ℝ^{d_y}`.
    StandardGaussian,
    /// Atoms read from a CSV file; `m` is ignored.
    File(PathBuf),
}

impl FromStr for ReferenceSpec {
    type Err = Error;

    /// Accepts `uniform-cube`, `standard-gaussian` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-cube" => Ok(Self::UniformCube),
            "standard-gaussian" => Ok(Self::StandardGaussian),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(Error::Input(format!(
                    "--reference: expected uniform-cube, standard-gaussian or file:PATH, got `{s}`"
                ))),
            },
        }
    }
}

/// Reference atoms with uniform weights and how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub u: Array2<f64>,
    pub a: Array1<f64>,
    pub info: ReferenceInfo,
}

pub const REFERENCE_GENERATOR: &str = "ChaCha8Rng::seed_from_u64; row-major draws";

pub fn make_reference(spec: &ReferenceSpec, m: usize, d_y: usize, seed: u64) -> Result<Reference> {
    if d_y == 0 {
        return Err(Error::Dimension("reference dimension must be positive".into()));
    }
    let (u, info) = match spec {
        ReferenceSpec::File(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
            let u = read_reference_csv(file, d_y)?;
            let info = ReferenceInfo {
                kind: format!("file:{}", path.display()),
                seed: None,
                generator: "none".into(),
            };
            (u, info)
        }
        _ => {
            if m == 0 {
                return Err(Error::Parameter {
                    name: "m",
                    reason: "must be at least 1".into(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, kind) = if *spec == ReferenceSpec::UniformCube {
                let u = Array2::from_shape_simple_fn((m, d_y), || rng.random::<f64>());
                (u, "uniform-cube")
            } else {
                let u = Array2::from_shape_simple_fn((m, d_y), || rng.sample::<f64, _>(StandardNormal));
                (u, "standard-gaussian")
            };
            let info = ReferenceInfo {
                kind: kind.into(),
                seed: Some(seed),
                generator: REFERENCE_GENERATOR.into(),
            };
            (u, info)
        }
    };
    let m = u.nrows();
    Ok(Reference {
        u,
        a: Array1::from_elem(m, 1.0 / m as f64),
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_rows_center() {
        let data = "x,y\n1,0.5\n3,2.5\n";
        let got = ingest_csv(data.as_bytes(), &cols(&["x"]), &cols(&["y"])).unwrap();
        assert_eq!(got.x, array![[-1.0], [1.0]]);
        assert_eq!(got.y, array![[0.5], [2.5]]);
        assert_eq!(got.b, array![0.5, 0.5]);
    }

    #[test]
    fn mixed_fixture_parses_exactly() {
        let data = "id,x1,label,y1,x2,y2\n\
                    a,1.5,p,0.25,-2,10\n\
                    b,-0.5,q,1e-3,0,-1.5\n\
                    c,2.5,r,3,4,0\n\
                    d,-3.5,s,-7.75,-2,2.5\n";
        let got = ingest_csv(data.as_bytes(), &cols(&["x1", "x2"]), &cols(&["y1", "y2"])).unwrap();
        // column means: x1 = 0, x2 = 0
        assert_eq!(got.x, array![[1.5, -2.0], [-0.5, 0.0], [2.5, 4.0], [-3.5, -2.0]]);
        assert_eq!(got.y, array![[0.25, 10.0], [1e-3, -1.5], [3.0, 0.0], [-7.75, 2.5]]);
    }

    #[test]
    fn constant_covariate_rejected() {
        let data = "x,y\n2,1\n2,3\n2,0\n";
        let err = ingest_csv(data.as_bytes(), &cols(&["x"]), &cols(&["y"])).unwrap_err();
        assert!(matches!(err, Error::DegenerateCovariates { .. }));
    }

    #[test]
    fn errors_name_row_and_column() {
        let data = "x,y\n1,2\n3,abc\n";
        let err = ingest_csv(data.as_bytes(), &cols(&["x"]), &cols(&["y"])).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("`y`"), "{err}");
        let err = ingest_csv(data.as_bytes(), &cols(&["z"]), &cols(&["y"])).unwrap_err().to_string();
        assert!(err.contains("--x-cols") && err.contains("`z`"), "{err}");
        let err = ingest_csv("x,y\n1,2\n".as_bytes(), &cols(&["x"]), &cols(&["y"])).unwrap_err().to_string();
        assert!(err.contains("at least 2"), "{err}");
    }

    #[test]
    fn uniform_reference_is_reproducible() {
        let r = make_reference(&ReferenceSpec::UniformCube, 3, 2, 11).unwrap();
        let s = make_reference(&ReferenceSpec::UniformCube, 3, 2, 11).unwrap();
        assert_eq!(r.u, s.u);
        assert_eq!(r.u.dim(), (3, 2));
        assert!(r.u.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(r.info.seed, Some(11));
    }

    #[test]
    fn gaussian_reference_moments() {
        let m = 5000;
        let r = make_reference(&ReferenceSpec::StandardGaussian, m, 2, 3).unwrap();
        let tol = 5.0 / (m as f64).sqrt();
        let mean = numerics::weighted_mean_rows(r.u.view(), r.a.view());
        assert!(mean.iter().all(|v| v.abs() <= tol));
        let c = center_columns(r.u.clone(), r.a.view());
        let s = numerics::weighted_second_moment(c.view(), r.a.view());
        for (k, v) in s.iter().enumerate() {
            let target = if k % 3 == 0 { 1.0 } else { 0.0 };
            assert!((v - target).abs() <= tol, "{v}");
        }
    }

    #[test]
    fn reference_file_echoes_atoms() {
        let atoms = read_reference_csv("u1,u2\n0.5,1\n-2,3.25\n".as_bytes(), 2).unwrap();
        assert_eq!(atoms, array![[0.5, 1.0], [-2.0, 3.25]]);
        assert!(read_reference_csv("u1\n0.5\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn reference_spec_parsing() {
        assert_eq!("uniform-cube".parse::<ReferenceSpec>().unwrap(), ReferenceSpec::UniformCube);
        assert_eq!(
            "file:ref.csv".parse::<ReferenceSpec>().unwrap(),
            ReferenceSpec::File(PathBuf::from("ref.csv"))
        );
        assert!("cube".parse::<ReferenceSpec>().is_err());
    }
}
