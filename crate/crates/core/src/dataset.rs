//! Numeric datasets loaded from CSV, and seeded train/test splits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BiknnError, Result};

/// An `n x d` matrix of finite reals with optional 0/1 outlier labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<u8>>,
    feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Per-class proportional draw when labels exist, uniform otherwise.
    #[default]
    Stratified,
    Uniform,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Option<Vec<u8>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(BiknnError::Empty("dataset has no rows"));
        }
        if d == 0 {
            return Err(BiknnError::Empty("dataset has no feature columns"));
        }
        if feature_names.len() != d {
            return Err(BiknnError::DimensionMismatch {
                expected: d,
                actual: feature_names.len(),
            });
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(BiknnError::NonNumeric {
                row: idx / d + 1,
                column: feature_names[idx % d].clone(),
                value: features[[idx / d, idx % d]].to_string(),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(BiknnError::DimensionMismatch {
                    expected: n,
                    actual: labels.len(),
                });
            }
            if let Some(i) = labels.iter().position(|&l| l > 1) {
                return Err(BiknnError::InvalidLabel {
                    row: i + 1,
                    value: labels[i].to_string(),
                });
            }
        }
        // Row-major storage is relied on for slice access to rows.
        let features = if features.is_standard_layout() {
            features
        } else {
            features.as_standard_layout().into_owned()
        };
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    /// Unlabeled dataset with generated column names `x0, x1, ...`.
    pub fn from_features(features: Array2<f64>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(features, None, names)
    }

    pub fn with_labels(self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.features, Some(labels), self.feature_names)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.features.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// Load a headered, comma-separated file. `label_column`, when given, is
    /// removed from the features and must hold exactly `0` or `1`.
    pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| BiknnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, label_column)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(BiknnError::Empty("missing header row"));
        }
        let label_idx = match label_column {
            Some(name) => Some(
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| BiknnError::MissingColumn(name.to_owned()))?,
            ),
            None => None,
        };
        let feature_names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != label_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let d = feature_names.len();

        let mut values = Vec::new();
        let mut labels = label_idx.map(|_| Vec::new());
        let mut n = 0;
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            for (j, cell) in record.iter().enumerate() {
                if Some(j) == label_idx {
                    let label = match cell {
                        "0" => 0,
                        "1" => 1,
                        _ => {
                            return Err(BiknnError::InvalidLabel {
                                row,
                                value: cell.to_owned(),
                            })
                        }
                    };
                    labels.as_mut().expect("label column").push(label);
                    continue;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(BiknnError::NonNumeric {
                            row,
                            column: header[j].clone(),
                            value: cell.to_owned(),
                        })
                    }
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(BiknnError::Empty("no data rows"));
        }
        let features = Array2::from_shape_vec((n, d), values)
            .map_err(|_| BiknnError::Empty("no feature columns"))?;
        Self::new(features, labels, feature_names)
    }

    /// Write features (and a trailing `label` column when labeled) using the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push("label");
        }
        wtr.write_record(&header)?;
        for (i, row) in self.features.axis_iter(Axis(0)).enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|source| BiknnError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(features, labels, self.feature_names.clone())
    }

    /// Seeded split with stratification whenever labels are present.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        self.split_with(train_fraction, seed, SplitMode::Stratified)
    }

    pub fn split_with(
        &self,
        train_fraction: f64,
        seed: u64,
        mode: SplitMode,
    ) -> Result<(Self, Self)> {
        let (train, test) = self.split_indices(train_fraction, seed, mode)?;
        Ok((self.select(&train)?, self.select(&test)?))
    }

    /// Row indices of a split, each list ascending.
    ///
    /// The training size is `round(train_fraction * n)` clamped to `[1, n-1]`.
    /// Stratified draws allocate that total across classes by largest
    /// remainder, so per-class counts are proportional up to rounding.
    pub fn split_indices(
        &self,
        train_fraction: f64,
        seed: u64,
        mode: SplitMode,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(BiknnError::InvalidParameter(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let n = self.n();
        if n < 2 {
            return Err(BiknnError::TooFewPoints { need: 2, got: n });
        }
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);

        let groups: Vec<Vec<usize>> = match (&self.labels, mode) {
            (Some(labels), SplitMode::Stratified) => {
                let mut g = vec![Vec::new(), Vec::new()];
                for (i, &l) in labels.iter().enumerate() {
                    g[l as usize].push(i);
                }
                g.retain(|v| !v.is_empty());
                g
            }
            _ => vec![(0..n).collect()],
        };
        let quotas = allocate(&groups.iter().map(Vec::len).collect::<Vec<_>>(), n_train);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::with_capacity(n_train);
        let mut test = Vec::with_capacity(n - n_train);
        for (mut members, quota) in groups.into_iter().zip(quotas) {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..quota]);
            test.extend_from_slice(&members[quota..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }
}

/// Split `total` across groups proportionally to their sizes (largest
/// remainder, ties to the earlier group), giving every group of size >= 2 at
/// least one slot when the total allows it.
fn allocate(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * total as f64 / n as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if quotas[g] < sizes[g] {
            quotas[g] += 1;
            left -= 1;
        }
    }
    for g in 0..sizes.len() {
        if quotas[g] == 0 && sizes[g] >= 2 {
            let donor = (0..sizes.len())
                .filter(|&o| o != g && quotas[o] > 1)
                .max_by_key(|&o| (quotas[o], std::cmp::Reverse(o)));
            if let Some(donor) = donor {
                quotas[donor] -= 1;
                quotas[g] += 1;
            }
        }
    }
    quotas
}
