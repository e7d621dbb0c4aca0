//! Instance files (CSV) and deterministic instance sampling.
//!
//! A dataset CSV has a header row and one column per feature, in feature-id
//! order. A final `class`, `label` or `target` column is allowed and ignored:
//! instances are always labelled by the model's own prediction.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{random_point, Instance, ModelError, TreeEnsembleModel};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    Width { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column}: {message}")]
    Value { row: usize, column: usize, message: String },
    #[error("row {row}: {source}")]
    Model { row: usize, source: ModelError },
    #[error("cannot sample {requested} instances from {available}")]
    TooFew { requested: usize, available: usize },
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub header: Vec<String>,
    pub points: Vec<Vec<Rational>>,
}

const LABEL_COLUMNS: [&str; 3] = ["class", "label", "target"];

pub fn load_csv<R: Read>(name: &str, reader: R, model: &TreeEnsembleModel) -> Result<Dataset, DatasetError> {
    let m = model.num_features();
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    let labelled = header.len() == m + 1 && LABEL_COLUMNS.contains(&header[m].to_ascii_lowercase().as_str());
    if header.len() != m && !labelled {
        return Err(DatasetError::Width {
            row: 1,
            expected: m,
            found: header.len(),
        });
    }
    let mut points = Vec::new();
    for (index, record) in csv.records().enumerate() {
        let record = record?;
        let row = index + 2;
        if record.len() != header.len() {
            return Err(DatasetError::Width {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let point = record
            .iter()
            .take(m)
            .enumerate()
            .map(|(column, field)| {
                field.parse::<Rational>().map_err(|e| DatasetError::Value {
                    row,
                    column: column + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        model.check_point(&point).map_err(|source| DatasetError::Model { row, source })?;
        points.push(point);
    }
    Ok(Dataset {
        name: name.to_string(),
        header: header.into_iter().take(m).collect(),
        points,
    })
}

pub fn load_csv_file(path: impl AsRef<Path>, model: &TreeEnsembleModel) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Csv(format!("{}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    load_csv(&name, file, model)
}

pub fn write_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<(), DatasetError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(&dataset.header)?;
    for point in &dataset.points {
        csv.write_record(point.iter().map(|v| v.to_string()))?;
    }
    csv.flush().map_err(|e| DatasetError::Csv(e.to_string()))?;
    Ok(())
}

/// `n` random in-domain points for `model`.
pub fn generate_dataset(name: &str, model: &TreeEnsembleModel, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset {
        name: name.to_string(),
        header: model.features().iter().map(|f| f.name.clone()).collect(),
        points: (0..n).map(|_| random_point(model, &mut rng)).collect(),
    }
}

/// `n` rows drawn without replacement, in ascending row order, each
/// labelled with the model's prediction. Takes every row when `n` is `None`.
pub fn sample_instances(
    model: &TreeEnsembleModel,
    dataset: &Dataset,
    n: Option<usize>,
    seed: u64,
) -> Result<Vec<(usize, Instance)>, DatasetError> {
    let available = dataset.points.len();
    let mut rows: Vec<usize> = match n {
        None => (0..available).collect(),
        Some(n) if n > available => {
            return Err(DatasetError::TooFew {
                requested: n,
                available,
            })
        }
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, available, n).into_vec()
        }
    };
    rows.sort_unstable();
    rows.into_iter()
        .map(|row| {
            Instance::predicted(model, dataset.points[row].clone())
                .map(|inst| (row, inst))
                .map_err(|source| DatasetError::Model { row: row + 2, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn csv_round_trip() {
        let (model, _) = fixtures::pima();
        let data = generate_dataset("pima", &model, 25, 4);
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &data).unwrap();
        let back = load_csv("pima", bytes.as_slice(), &model).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn label_column_is_ignored() {
        let (model, _) = fixtures::xd6();
        let text = "a,b,c,d,e,f,g,h,i,class\n1,0,1,1,1,1,1,1,1,0\n";
        let data = load_csv("x", text.as_bytes(), &model).unwrap();
        assert_eq!(data.points.len(), 1);
        assert_eq!(data.header.len(), 9);
    }

    #[test]
    fn bad_rows() {
        let (model, _) = fixtures::xd6();
        let narrow = "a,b\n1,0\n";
        assert!(matches!(load_csv("x", narrow.as_bytes(), &model), Err(DatasetError::Width { row: 1, .. })));
        let bad_value = "a,b,c,d,e,f,g,h,i\n1,0,1,1,x,1,1,1,1\n";
        assert!(matches!(
            load_csv("x", bad_value.as_bytes(), &model),
            Err(DatasetError::Value { row: 2, column: 5, .. })
        ));
        let out_of_domain = "a,b,c,d,e,f,g,h,i\n1,0,1,1,2,1,1,1,1\n";
        assert!(matches!(load_csv("x", out_of_domain.as_bytes(), &model), Err(DatasetError::Model { row: 2, .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let (model, _) = fixtures::pima();
        let data = generate_dataset("pima", &model, 50, 1);
        let a = sample_instances(&model, &data, Some(20), 9).unwrap();
        let b = sample_instances(&model, &data, Some(20), 9).unwrap();
        assert_eq!(a, b);
        let mut rows: Vec<usize> = a.iter().map(|(r, _)| *r).collect();
        rows.dedup();
        assert_eq!(rows.len(), 20);
        assert!(a.iter().all(|(r, inst)| inst.point == data.points[*r]));
        assert!(matches!(sample_instances(&model, &data, Some(51), 9), Err(DatasetError::TooFew { .. })));
        assert_eq!(sample_instances(&model, &data, None, 0).unwrap().len(), 50);
    }
}
