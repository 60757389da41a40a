//! CSV outputs: anomaly plane, classifications, scores, grids and reports.
//!
//! Floats are written with 9 significant digits (C's `%.9g`).

use std::io::Write;

use ndarray::Array2;

use crate::anomaly_space::AnomalyPoint;
use crate::classify::OutlierType;
use crate::error::{BiknnError, Result};
use crate::eval::TrialReport;

const SIG_DIGITS: i32 = 9;

/// `%.9g`: fixed notation for exponents in `[-5, 9)`, scientific otherwise,
/// trailing zeros trimmed.
pub fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Round to the target precision first so the exponent reflects rounding.
    let sci = format!("{:.*e}", (SIG_DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIG_DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn io_err(source: std::io::Error) -> BiknnError {
    BiknnError::Io {
        path: "<output>".into(),
        source,
    }
}

pub fn write_space<W: Write>(mut w: W, space: &[AnomalyPoint]) -> Result<()> {
    writeln!(w, "id,k_e,k_p").map_err(io_err)?;
    for (i, p) in space.iter().enumerate() {
        writeln!(w, "{i},{},{}", fmt_float(p.k_e), fmt_float(p.k_p)).map_err(io_err)?;
    }
    Ok(())
}

/// Parse an `id,k_e,k_p` file (extra columns are ignored).
pub fn read_space<R: std::io::Read>(r: R) -> Result<Vec<AnomalyPoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |j: usize, name: &str| -> Result<f64> {
            let cell = rec.get(j).unwrap_or("");
            cell.parse().map_err(|_| BiknnError::NonNumeric {
                row: row + 1,
                column: name.into(),
                value: cell.into(),
            })
        };
        out.push(AnomalyPoint {
            k_e: field(1, "k_e")?,
            k_p: field(2, "k_p")?,
        });
    }
    Ok(out)
}

pub fn write_classification<W: Write>(
    mut w: W,
    space: &[AnomalyPoint],
    types: &[OutlierType],
) -> Result<()> {
    if space.len() != types.len() {
        return Err(BiknnError::DimensionMismatch {
            expected: space.len(),
            actual: types.len(),
        });
    }
    writeln!(w, "id,k_e,k_p,type").map_err(io_err)?;
    for (i, (p, t)) in space.iter().zip(types).enumerate() {
        writeln!(w, "{i},{},{},{t}", fmt_float(p.k_e), fmt_float(p.k_p)).map_err(io_err)?;
    }
    Ok(())
}

/// `id,score`, plus `is_outlier` (0/1) when flags are given.
pub fn write_scores<W: Write>(mut w: W, scores: &[f64], flags: Option<&[bool]>) -> Result<()> {
    match flags {
        Some(f) if f.len() != scores.len() => {
            return Err(BiknnError::DimensionMismatch {
                expected: scores.len(),
                actual: f.len(),
            })
        }
        Some(_) => writeln!(w, "id,score,is_outlier"),
        None => writeln!(w, "id,score"),
    }
    .map_err(io_err)?;
    for (i, s) in scores.iter().enumerate() {
        match flags {
            Some(f) => writeln!(w, "{i},{},{}", fmt_float(*s), u8::from(f[i])),
            None => writeln!(w, "{i},{}", fmt_float(*s)),
        }
        .map_err(io_err)?;
    }
    Ok(())
}

/// Two comment lines (`# xmin xmax ymin ymax`, `# resolution`) followed by
/// one CSV row per y value, x varying along the row.
pub fn write_grid<W: Write>(
    mut w: W,
    mins: [f64; 2],
    maxs: [f64; 2],
    grid: &Array2<f64>,
) -> Result<()> {
    writeln!(
        w,
        "# {} {} {} {}",
        fmt_float(mins[0]),
        fmt_float(maxs[0]),
        fmt_float(mins[1]),
        fmt_float(maxs[1])
    )
    .map_err(io_err)?;
    writeln!(w, "# {}", grid.nrows()).map_err(io_err)?;
    for row in grid.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Means per (dataset, params). The `seconds` cell is left empty unless
/// `with_timing`, which keeps the default output byte-reproducible.
pub fn write_report<W: Write>(mut w: W, reports: &[TrialReport], with_timing: bool) -> Result<()> {
    writeln!(w, "dataset,params,roc_auc,ap,precision_at_n,seconds").map_err(io_err)?;
    for r in reports {
        let secs = if with_timing {
            fmt_float(r.mean_seconds)
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{secs}",
            r.dataset,
            r.params_name,
            fmt_float(r.mean_roc_auc),
            fmt_float(r.mean_ap),
            fmt_float(r.mean_precision_at_n),
        )
        .map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_float(0.0), "0");
        assert_eq!(fmt_float(1.0), "1");
        assert_eq!(fmt_float(-2.5), "-2.5");
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_float(123456789.4), "123456789");
        assert_eq!(fmt_float(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_float(0.0001234), "0.0001234");
        assert_eq!(fmt_float(0.00001234), "1.234e-05");
        assert_eq!(fmt_float(9.9999999996), "10");
        assert_eq!(fmt_float(2.0 * std::f64::consts::LN_2), "1.38629436");
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    proptest! {
        #[test]
        fn parses_back_within_precision(v in prop::num::f64::NORMAL) {
            let back: f64 = fmt_float(v).parse().unwrap();
            prop_assert!((back - v).abs() <= 5e-9 * v.abs());
        }
    }

    #[test]
    fn space_round_trip() {
        let space = vec![
            AnomalyPoint {
                k_e: 1.5,
                k_p: 0.25,
            },
            AnomalyPoint { k_e: 0.0, k_p: 1.0 },
        ];
        let mut buf = Vec::new();
        write_space(&mut buf, &space).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "id,k_e,k_p\n0,1.5,0.25\n1,0,1\n"
        );
        assert_eq!(read_space(buf.as_slice()).unwrap(), space);
    }

    #[test]
    fn classification_and_scores() {
        let space = vec![AnomalyPoint { k_e: 2.0, k_p: 0.5 }];
        let mut buf = Vec::new();
        write_classification(&mut buf, &space, &[OutlierType::TypeII]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "id,k_e,k_p,type\n0,2,0.5,II\n"
        );

        let mut buf = Vec::new();
        write_scores(&mut buf, &[0.5, 2.0], Some(&[false, true])).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "id,score,is_outlier\n0,0.5,0\n1,2,1\n"
        );
        assert!(write_scores(Vec::new(), &[0.5], Some(&[])).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, [0.0, -1.0], [1.0, 1.0], &g).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# 0 1 -1 1\n# 2\n1,2\n3,4\n"
        );
    }
}
