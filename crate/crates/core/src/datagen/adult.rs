use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::DatagenError;
use crate::data::{densify_keys, ClusteredDataset};

const COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

const AGE: usize = 0;
const MARITAL: usize = 5;
const RACE: usize = 8;
const SEX: usize = 9;
const INCOME: usize = 14;
const CONTINUOUS: [usize; 6] = [0, 2, 4, 10, 11, 12];

const WORKCLASS: &[&str] = &[
    "Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov", "Local-gov", "State-gov",
    "Without-pay", "Never-worked", "?",
];
const EDUCATION: &[&str] = &[
    "Bachelors", "Some-college", "11th", "HS-grad", "Prof-school", "Assoc-acdm", "Assoc-voc",
    "9th", "7th-8th", "12th", "Masters", "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool",
];
const MARITAL_STATUS: &[&str] = &[
    "Married-civ-spouse", "Divorced", "Never-married", "Separated", "Widowed",
    "Married-spouse-absent", "Married-AF-spouse",
];
const OCCUPATION: &[&str] = &[
    "Tech-support", "Craft-repair", "Other-service", "Sales", "Exec-managerial",
    "Prof-specialty", "Handlers-cleaners", "Machine-op-inspct", "Adm-clerical",
    "Farming-fishing", "Transport-moving", "Priv-house-serv", "Protective-serv", "Armed-Forces",
    "?",
];
const RELATIONSHIP: &[&str] = &["Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried"];
const RACE_LEVELS: &[&str] = &["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"];
const NATIVE_COUNTRY: &[&str] = &[
    "United-States", "Cambodia", "England", "Puerto-Rico", "Canada", "Germany",
    "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece", "South", "China", "Cuba", "Iran",
    "Honduras", "Philippines", "Italy", "Poland", "Jamaica", "Vietnam", "Mexico", "Portugal",
    "Ireland", "France", "Dominican-Republic", "Laos", "Ecuador", "Taiwan", "Haiti", "Columbia",
    "Hungary", "Guatemala", "Nicaragua", "Scotland", "Thailand", "Yugoslavia", "El-Salvador",
    "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands", "?",
];

/// Categorical columns expanded into indicators, with their levels.
const CATEGORICAL: [(usize, &[&str]); 7] = [
    (1, WORKCLASS),
    (3, EDUCATION),
    (MARITAL, MARITAL_STATUS),
    (6, OCCUPATION),
    (7, RELATIONSHIP),
    (RACE, RACE_LEVELS),
    (13, NATIVE_COUNTRY),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitiveColumn {
    /// Male → 1, Female → 0.
    Sex,
    /// White → 1, anything else → 0.
    Race,
}

impl FromStr for SensitiveColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sex" | "gender" => Ok(SensitiveColumn::Sex),
            "race" => Ok(SensitiveColumn::Race),
            other => Err(format!("unsupported sensitive column `{other}` (expected sex or race)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdultOptions {
    pub age_bin_width: f64,
    pub age_bin_start: f64,
    pub sensitive: SensitiveColumn,
}

impl Default for AdultOptions {
    fn default() -> Self {
        Self { age_bin_width: 10.0, age_bin_start: 10.0, sensitive: SensitiveColumn::Sex }
    }
}

/// Adult rows with raw (unstandardized) continuous covariates. Fit a
/// [`Standardizer`] on the training rows before fitting models.
#[derive(Debug, Clone)]
pub struct AdultData {
    pub dataset: ClusteredDataset,
    /// Columns of `dataset.x()` holding continuous covariates.
    pub continuous: Vec<usize>,
}

impl AdultData {
    /// Standardizes the continuous columns with statistics of `train_rows`.
    pub fn standardized(&self, train_rows: &[usize]) -> ClusteredDataset {
        Standardizer::fit(&self.dataset, &self.continuous, train_rows).apply(&self.dataset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Mean and population standard deviation of `columns` over `rows`. A
    /// constant column keeps scale 1.
    pub fn fit(ds: &ClusteredDataset, columns: &[usize], rows: &[usize]) -> Self {
        let x = ds.x();
        let n = rows.len().max(1) as f64;
        let mut mean = Vec::with_capacity(columns.len());
        let mut scale = Vec::with_capacity(columns.len());
        for &j in columns {
            let m = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (x[(i, j)] - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Self { columns: columns.to_vec(), mean, scale }
    }

    pub fn apply(&self, ds: &ClusteredDataset) -> ClusteredDataset {
        let mut x = ds.x().clone();
        for ((&j, &m), &s) in self.columns.iter().zip(&self.mean).zip(&self.scale) {
            for v in x.column_mut(j).iter_mut() {
                *v = (*v - m) / s;
            }
        }
        ds.with_x(x).expect("same row count")
    }
}

pub fn ingest_adult(path: impl AsRef<Path>, options: &AdultOptions) -> Result<AdultData, DatagenError> {
    read_adult(std::fs::File::open(path)?, options)
}

fn normalize_name(name: &str) -> String {
    let n = name.trim().to_ascii_lowercase().replace(['_', '.', ' '], "-");
    match n.as_str() {
        "gender" => "sex".into(),
        "educational-num" => "education-num".into(),
        "class" | "salary" | "label" | "income-bracket" => "income".into(),
        _ => n,
    }
}

/// Reads the 15-column Adult layout, either headerless (the UCI files) or
/// with a header row naming the columns in any order.
pub fn read_adult<R: Read>(reader: R, options: &AdultOptions) -> Result<AdultData, DatagenError> {
    if !(options.age_bin_width > 0.0 && options.age_bin_width.is_finite()) {
        return Err(DatagenError::Spec(format!("age bin width {} must be positive", options.age_bin_width)));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'|'))
        .from_reader(reader);

    let mut order: Option<Vec<usize>> = None;
    let level_index: Vec<HashMap<&str, usize>> = CATEGORICAL
        .iter()
        .map(|(_, levels)| levels.iter().enumerate().map(|(i, l)| (*l, i)).collect())
        .collect();
    let n_features = CONTINUOUS.len() + 1 + CATEGORICAL.iter().map(|(_, l)| l.len()).sum::<usize>();

    let mut feats: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut s = Vec::new();
    let mut keys = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatagenError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if order.is_none() {
            if rec[0].parse::<f64>().is_err() {
                order = Some(header_order(&rec, line)?);
                continue;
            }
            order = Some((0..COLUMNS.len()).collect());
        }
        let order = order.as_ref().expect("set above");
        if rec.len() != COLUMNS.len() {
            return Err(DatagenError::Parse {
                line,
                message: format!("expected {} fields, found {}", COLUMNS.len(), rec.len()),
            });
        }
        let fields: Vec<&str> = order.iter().map(|&pos| &rec[pos]).collect();

        for &c in &CONTINUOUS {
            let v: f64 = fields[c].parse().map_err(|_| DatagenError::Parse {
                line,
                message: format!("column `{}`: cannot parse `{}` as a number", COLUMNS[c], fields[c]),
            })?;
            feats.push(v);
        }
        let male = match fields[SEX] {
            "Male" => 1.0,
            "Female" => 0.0,
            other => return Err(unknown(line, SEX, other)),
        };
        feats.push(male);
        for ((col, levels), index) in CATEGORICAL.iter().zip(&level_index) {
            let hit = *index.get(fields[*col]).ok_or_else(|| unknown(line, *col, fields[*col]))?;
            feats.extend((0..levels.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
        }

        let label = fields[INCOME].trim_end_matches('.');
        y.push(match label {
            ">50K" => 1,
            "<=50K" => -1,
            other => return Err(unknown(line, INCOME, other)),
        });
        s.push(match options.sensitive {
            SensitiveColumn::Sex => male as u8,
            SensitiveColumn::Race => u8::from(fields[RACE] == "White"),
        });
        let age: f64 = feats[feats.len() - n_features];
        let bin = ((age - options.age_bin_start) / options.age_bin_width).floor();
        let lo = options.age_bin_start + bin * options.age_bin_width;
        let hi = lo + options.age_bin_width - 1.0;
        keys.push(format!("{lo}-{hi}|{}", fields[MARITAL]));
    }
    let n = y.len();
    if n == 0 {
        return Err(DatagenError::Parse { line: 0, message: "no data rows".into() });
    }
    let (cluster, cluster_keys) = densify_keys(&keys);
    let k = cluster_keys.len();
    let features = DMatrix::from_row_slice(n, n_features, &feats);
    let dataset = ClusteredDataset::from_features(&features, y, s, cluster, k)?
        .with_names(feature_names())?
        .with_cluster_keys(cluster_keys)?;
    debug_assert_eq!(AGE, CONTINUOUS[0]);
    Ok(AdultData { dataset, continuous: (1..=CONTINUOUS.len()).collect() })
}

fn unknown(line: u64, col: usize, value: &str) -> DatagenError {
    DatagenError::UnknownCategory { line, column: COLUMNS[col].to_string(), value: value.to_string() }
}

fn header_order(rec: &csv::StringRecord, line: u64) -> Result<Vec<usize>, DatagenError> {
    let names: Vec<String> = rec.iter().map(normalize_name).collect();
    COLUMNS
        .iter()
        .map(|want| {
            names.iter().position(|n| n == want).ok_or_else(|| DatagenError::Parse {
                line,
                message: format!("header lacks column `{want}`"),
            })
        })
        .collect()
}

fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = CONTINUOUS.iter().map(|&c| COLUMNS[c].to_string()).collect();
    names.push("sex=Male".into());
    for (col, levels) in CATEGORICAL {
        names.extend(levels.iter().map(|l| format!("{}={l}", COLUMNS[col])));
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROWS: &str = "\
39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
37, Private, 284582, Masters, 14, Married-civ-spouse, Exec-managerial, Wife, White, Female, 0, 0, 40, United-States, >50K
33, Private, 160187, 9th, 5, Married-civ-spouse, Other-service, Husband, Black, Male, 0, 0, 16, Jamaica, <=50K

43, ?, 117037, 11th, 7, Married-civ-spouse, ?, Husband, White, Male, 0, 2042, 40, ?, >50K.
";

    fn parse(text: &str) -> AdultData {
        read_adult(text.as_bytes(), &AdultOptions::default()).unwrap()
    }

    #[test]
    fn labels_sensitive_and_clusters() {
        let data = parse(ROWS);
        let ds = &data.dataset;
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.y(), &[-1, 1, -1, 1]);
        assert_eq!(ds.s(), &[1, 0, 1, 1]);
        let c = ds.cluster();
        // 37 and 33 married share a decade; 43 married does not; 39 never married differs.
        assert_eq!(c[1], c[2]);
        assert_ne!(c[1], c[3]);
        assert_ne!(c[0], c[1]);
        assert_eq!(ds.cluster_key(c[1]), Some("30-39|Married-civ-spouse"));
        assert!(ds.validate().is_empty());
        assert_eq!(ds.names().unwrap().len(), ds.p());
    }

    #[test]
    fn indicators_are_one_per_categorical() {
        let data = parse(ROWS);
        let ds = &data.dataset;
        for i in 0..ds.n() {
            let row = ds.row(i);
            let ones = row.iter().skip(1 + CONTINUOUS.len() + 1).filter(|&&v| v == 1.0).count();
            assert_eq!(ones, CATEGORICAL.len());
        }
    }

    #[test]
    fn header_layout_and_test_file_quirks() {
        let text = "|1x3 Cross validator\n\
            income,age,workclass,fnlwgt,education,educational_num,marital_status,occupation,relationship,race,gender,capital_gain,capital_loss,hours_per_week,native_country\n\
            >50K.,50,Private,1,Bachelors,13,Divorced,Sales,Unmarried,Asian-Pac-Islander,Female,0,0,45,India\n";
        let data = parse(text);
        assert_eq!(data.dataset.y(), &[1]);
        assert_eq!(data.dataset.s(), &[0]);
        assert_eq!(data.dataset.x()[(0, 1)], 50.0);
    }

    #[test]
    fn unknown_category_is_reported() {
        let text = "39, State-gov, 77516, Bachelors, 13, Never-married, Astronaut, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n";
        match read_adult(text.as_bytes(), &AdultOptions::default()) {
            Err(DatagenError::UnknownCategory { line, column, value }) => {
                assert_eq!((line, column.as_str(), value.as_str()), (1, "occupation", "Astronaut"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn race_as_sensitive() {
        let opts = AdultOptions { sensitive: SensitiveColumn::Race, ..AdultOptions::default() };
        let data = read_adult(ROWS.as_bytes(), &opts).unwrap();
        assert_eq!(data.dataset.s(), &[1, 1, 0, 1]);
    }

    #[test]
    fn standardizer_uses_training_rows_only() {
        let data = parse(ROWS);
        let std = Standardizer::fit(&data.dataset, &data.continuous, &[0, 1]);
        // Ages 39 and 37: mean 38, population sd 1.
        assert_eq!((std.mean[0], std.scale[0]), (38.0, 1.0));
        let ds = std.apply(&data.dataset);
        assert_eq!(ds.x()[(2, 1)], -5.0);
        assert!(ds.x().column(0).iter().all(|&v| v == 1.0));
        // Capital loss is constant on the training rows and keeps scale 1.
        assert_eq!(std.scale[4], 1.0);
    }
}
