//! `HWR1` model files: a line-oriented, diffable text format holding the
//! scaler, the classifier, the HOG parameters and training provenance.
//!
//! ```text
//! HWR1 <kind>
//! scaler <d>
//! <d means>
//! <d stds>
//! svm <C> <d>                      | mlp <L>
//! class <id>  (C times)            | sizes <s0> ... <sL>
//! <d weights>                      | per layer: fan_out weight rows, bias row
//! <bias>                           |
//! hog orientations=<n> cell=<px> block=<cells> norm=<none|l1|l2|l2hys>
//! meta
//! <key>=<value>  (sorted by key)
//! end
//! ```
//!
//! Numbers use 17 significant digits, which round-trips every `f64` exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::features::{hog, FeatureError, HogParams, ScalerParams};
use crate::image::GrayImage;
use crate::imageproc::ROI_SIDE;
use crate::matrix::Matrix;
use crate::mlp::MlpModel;
use crate::svm::LinearSvmModel;
use crate::Digit;

pub const MAGIC: &str = "HWR1";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an HWR model file")]
    BadMagic,
    #[error("unsupported model format version {0:?}")]
    UnsupportedVersion(String),
    #[error("line {line}: {reason}")]
    CorruptSection { line: usize, reason: String },
    #[error("dimension mismatch: scaler {scaler}, classifier {classifier}, hog {hog}")]
    DimensionMismatch {
        scaler: usize,
        classifier: usize,
        hog: usize,
    },
    #[error("input has {actual} features, model expects {expected}")]
    InputDimension { expected: usize, actual: usize },
    #[error("invalid provenance entry {0:?}")]
    InvalidMeta(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Svm(LinearSvmModel),
    Mlp(MlpModel),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Mlp(_) => "mlp",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Classifier::Svm(m) => m.dim(),
            Classifier::Mlp(m) => m.input_dim(),
        }
    }

    /// Predicts from an already standardized feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<Digit, ModelIoError> {
        if x.len() != self.input_dim() {
            return Err(ModelIoError::InputDimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(match self {
            Classifier::Svm(m) => m.predict(x).expect("dimension checked"),
            Classifier::Mlp(m) => m.predict(x).expect("dimension checked"),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    scaler: ScalerParams,
    classifier: Classifier,
    hog: HogParams,
    provenance: BTreeMap<String, String>,
}

fn check_meta(key: &str, value: &str) -> Result<(), ModelIoError> {
    let bad_key = key.is_empty() || key.contains(|c: char| c == '=' || c.is_whitespace());
    if bad_key || value.contains(['\n', '\r']) {
        return Err(ModelIoError::InvalidMeta(format!("{key}={value}")));
    }
    Ok(())
}

impl ModelBundle {
    /// Requires scaler, classifier and 28×28 HOG output to agree on dimension.
    pub fn new(
        scaler: ScalerParams,
        classifier: Classifier,
        hog: HogParams,
        provenance: BTreeMap<String, String>,
    ) -> Result<Self, ModelIoError> {
        let hog_dim = hog.output_len(ROI_SIDE, ROI_SIDE);
        if scaler.means.len() != scaler.stds.len()
            || scaler.dim() != classifier.input_dim()
            || scaler.dim() != hog_dim
        {
            return Err(ModelIoError::DimensionMismatch {
                scaler: scaler.dim(),
                classifier: classifier.input_dim(),
                hog: hog_dim,
            });
        }
        for (k, v) in &provenance {
            check_meta(k, v)?;
        }
        Ok(Self {
            scaler,
            classifier,
            hog,
            provenance,
        })
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn hog(&self) -> &HogParams {
        &self.hog
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn kind(&self) -> &'static str {
        self.classifier.kind()
    }

    /// Standardizes a raw HOG descriptor and classifies it.
    pub fn predict_features(&self, raw: &[f64]) -> Result<Digit, ModelIoError> {
        let x = self.scaler.transform_row(raw)?;
        self.classifier.predict(&x)
    }

    /// HOG, scaling and classification of one 28×28 image.
    pub fn predict_image(&self, img: &GrayImage) -> Result<Digit, ModelIoError> {
        self.predict_features(&hog(img, &self.hog)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {}", self.kind());
        let _ = writeln!(out, "scaler {}", self.scaler.dim());
        push_numbers(&mut out, &self.scaler.means);
        push_numbers(&mut out, &self.scaler.stds);
        match &self.classifier {
            Classifier::Svm(m) => {
                let _ = writeln!(out, "svm {} {}", m.class_ids().len(), m.dim());
                for (i, id) in m.class_ids().iter().enumerate() {
                    let _ = writeln!(out, "class {id}");
                    push_numbers(&mut out, m.weights().row(i));
                    push_numbers(&mut out, &m.biases()[i..=i]);
                }
            }
            Classifier::Mlp(m) => {
                let sizes = m.layer_sizes();
                let _ = writeln!(out, "mlp {}", sizes.len() - 1);
                out.push_str("sizes");
                for s in sizes {
                    let _ = write!(out, " {s}");
                }
                out.push('\n');
                for (w, b) in m.weights().iter().zip(m.biases()) {
                    for row in w.iter_rows() {
                        push_numbers(&mut out, row);
                    }
                    push_numbers(&mut out, b);
                }
            }
        }
        let h = &self.hog;
        let _ = writeln!(
            out,
            "hog orientations={} cell={} block={} norm={}",
            h.orientations, h.cell_side, h.block_cells, h.block_norm
        );
        out.push_str("meta\n");
        for (k, v) in &self.provenance {
            let _ = writeln!(out, "{k}={v}");
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelIoError> {
        Parser::new(text).bundle()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelIoError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn push_numbers(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn corrupt(&self, reason: impl Into<String>) -> ModelIoError {
        ModelIoError::CorruptSection {
            line: self.line_no,
            reason: reason.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<&'a str, ModelIoError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line_no = i + 1;
                Ok(l)
            }
            None => {
                self.line_no += 1;
                Err(self.corrupt(format!("unexpected end of file, expected {what}")))
            }
        }
    }

    // Line of the form `<keyword> <fields...>`; returns the fields.
    fn keyword(&mut self, keyword: &str, fields: usize) -> Result<Vec<&'a str>, ModelIoError> {
        let line = self.next_line(keyword)?;
        let mut parts = line.split(' ');
        if parts.next() != Some(keyword) {
            return Err(self.corrupt(format!("expected section {keyword:?}")));
        }
        let rest: Vec<&str> = parts.collect();
        if rest.len() != fields {
            return Err(self.corrupt(format!("{keyword:?} takes {fields} fields")));
        }
        Ok(rest)
    }

    fn count(&self, field: &str) -> Result<usize, ModelIoError> {
        field
            .parse()
            .map_err(|_| self.corrupt(format!("bad count {field:?}")))
    }

    fn numbers(&mut self, n: usize, what: &str) -> Result<Vec<f64>, ModelIoError> {
        let line = self.next_line(what)?;
        let values: Vec<f64> = line
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| self.corrupt(format!("bad number {s:?} in {what}")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != n {
            return Err(self.corrupt(format!("{what} has {} values, expected {n}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(self.corrupt(format!("non-finite value in {what}")));
        }
        Ok(values)
    }

    fn header(&mut self) -> Result<&'a str, ModelIoError> {
        let line = self
            .lines
            .next()
            .map(|(_, l)| l)
            .ok_or(ModelIoError::BadMagic)?;
        self.line_no = 1;
        let mut parts = line.split(' ');
        let magic = parts.next().unwrap_or("");
        if magic != MAGIC {
            let version = magic
                .strip_prefix("HWR")
                .filter(|v| !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()));
            return Err(match version {
                Some(_) => ModelIoError::UnsupportedVersion(magic.to_owned()),
                None => ModelIoError::BadMagic,
            });
        }
        match (parts.next(), parts.next()) {
            (Some(kind), None) => Ok(kind),
            _ => Err(self.corrupt("header must be `HWR1 <kind>`")),
        }
    }

    fn svm(&mut self, d: usize) -> Result<Classifier, ModelIoError> {
        let f = self.keyword("svm", 2)?;
        let (classes, dim) = (self.count(f[0])?, self.count(f[1])?);
        if dim != d {
            return Err(self.corrupt(format!(
                "svm dimension {dim} differs from scaler dimension {d}"
            )));
        }
        let mut ids = Vec::with_capacity(classes);
        let mut data = Vec::with_capacity(classes * dim);
        let mut biases = Vec::with_capacity(classes);
        for _ in 0..classes {
            let f = self.keyword("class", 1)?;
            let id: Digit = f[0]
                .parse()
                .map_err(|_| self.corrupt(format!("bad class id {:?}", f[0])))?;
            ids.push(id);
            data.extend(self.numbers(dim, "svm weights")?);
            biases.push(self.numbers(1, "svm bias")?[0]);
        }
        let model = LinearSvmModel::new(Matrix::from_vec(classes, dim, data), biases, ids)
            .map_err(|e| self.corrupt(e.to_string()))?;
        Ok(Classifier::Svm(model))
    }

    fn mlp(&mut self) -> Result<Classifier, ModelIoError> {
        let f = self.keyword("mlp", 1)?;
        let layers = self.count(f[0])?;
        let sizes: Vec<usize> = self
            .keyword("sizes", layers + 1)?
            .iter()
            .map(|s| self.count(s))
            .collect::<Result<_, _>>()?;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut data = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                data.extend(self.numbers(fan_in, "mlp weight row")?);
            }
            weights.push(Matrix::from_vec(fan_out, fan_in, data));
            biases.push(self.numbers(fan_out, "mlp bias")?);
        }
        let model =
            MlpModel::new(sizes, weights, biases).map_err(|e| self.corrupt(e.to_string()))?;
        Ok(Classifier::Mlp(model))
    }

    fn hog(&mut self) -> Result<HogParams, ModelIoError> {
        let f = self.keyword("hog", 4)?;
        let mut values = Vec::with_capacity(4);
        for (field, key) in f.iter().zip(["orientations", "cell", "block", "norm"]) {
            match field.split_once('=') {
                Some((k, v)) if k == key => values.push(v),
                _ => return Err(self.corrupt(format!("expected hog field {key}"))),
            }
        }
        Ok(HogParams {
            orientations: self.count(values[0])?,
            cell_side: self.count(values[1])?,
            block_cells: self.count(values[2])?,
            block_norm: values[3]
                .parse()
                .map_err(|e: FeatureError| self.corrupt(e.to_string()))?,
        })
    }

    fn meta(&mut self) -> Result<BTreeMap<String, String>, ModelIoError> {
        self.keyword("meta", 0)?;
        let mut out = BTreeMap::new();
        let mut last: Option<&str> = None;
        loop {
            let line = self.next_line("meta entry or end")?;
            if line == "end" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| self.corrupt("meta entries are key=value"))?;
            if last.is_some_and(|prev| prev >= k) {
                return Err(self.corrupt("meta keys must be unique and sorted"));
            }
            last = Some(k);
            out.insert(k.to_owned(), v.to_owned());
        }
        if let Some((i, l)) = self.lines.next() {
            if !l.is_empty() || self.lines.next().is_some() {
                self.line_no = i + 1;
                return Err(self.corrupt("content after end"));
            }
        }
        Ok(out)
    }

    fn bundle(mut self) -> Result<ModelBundle, ModelIoError> {
        let kind = self.header()?;
        if kind != "svm" && kind != "mlp" {
            return Err(self.corrupt(format!("unknown model kind {kind:?}")));
        }
        let f = self.keyword("scaler", 1)?;
        let d = self.count(f[0])?;
        let means = self.numbers(d, "scaler means")?;
        let stds = self.numbers(d, "scaler stds")?;
        if stds.iter().any(|&s| s <= 0.0) {
            return Err(self.corrupt("scaler stds must be positive"));
        }
        let classifier = if kind == "svm" {
            self.svm(d)?
        } else {
            self.mlp()?
        };
        let hog = self.hog()?;
        let provenance = self.meta()?;
        ModelBundle::new(ScalerParams { means, stds }, classifier, hog, provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BlockNorm;
    use crate::mlp::MlpHyper;
    use crate::prng::SplitMix64;

    fn tiny_svm() -> ModelBundle {
        let svm = LinearSvmModel::new(
            Matrix::from_rows([[1.0, -0.5], [-1.0, 0.5]]),
            vec![0.25, -0.25],
            vec![3, 7],
        )
        .unwrap();
        let hog = HogParams {
            orientations: 2,
            cell_side: 28,
            block_cells: 1,
            block_norm: BlockNorm::None,
        };
        let meta = BTreeMap::from([
            ("seed".to_owned(), "1".to_owned()),
            ("c".to_owned(), "1".to_owned()),
        ]);
        ModelBundle::new(
            ScalerParams {
                means: vec![0.5, -2.0],
                stds: vec![1.0, 0.25],
            },
            Classifier::Svm(svm),
            hog,
            meta,
        )
        .unwrap()
    }

    const TINY_TEXT: &str = "HWR1 svm
scaler 2
5.0000000000000000e-1 -2.0000000000000000e0
1.0000000000000000e0 2.5000000000000000e-1
svm 2 2
class 3
1.0000000000000000e0 -5.0000000000000000e-1
2.5000000000000000e-1
class 7
-1.0000000000000000e0 5.0000000000000000e-1
-2.5000000000000000e-1
hog orientations=2 cell=28 block=1 norm=none
meta
c=1
seed=1
end
";

    fn random_bundle(seed: u64) -> ModelBundle {
        let mut rng = SplitMix64::new(seed);
        let mut r = || rng.next_f64() * 2.0 - 1.0;
        let w = Matrix::from_vec(10, 36, (0..360).map(|_| r() * 1e-3 + 1e-300).collect());
        let svm =
            LinearSvmModel::new(w, (0..10).map(|_| r()).collect(), (0..10).collect()).unwrap();
        let scaler = ScalerParams {
            means: (0..36).map(|_| r()).collect(),
            stds: (0..36).map(|_| r().abs() + 0.01).collect(),
        };
        ModelBundle::new(
            scaler,
            Classifier::Svm(svm),
            HogParams::default(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn golden_text() {
        assert_eq!(tiny_svm().to_text(), TINY_TEXT);
        assert_eq!(ModelBundle::from_text(TINY_TEXT).unwrap(), tiny_svm());
    }

    #[test]
    fn svm_round_trip_is_exact() {
        let b = random_bundle(3);
        let back = ModelBundle::from_text(&b.to_text()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_text(), b.to_text());
    }

    #[test]
    fn mlp_round_trip_is_exact() {
        let m = MlpModel::init(36, &MlpHyper::default(), 10);
        let mut rng = SplitMix64::new(4);
        let scaler = ScalerParams {
            means: (0..36).map(|_| rng.next_f64()).collect(),
            stds: vec![1.0; 36],
        };
        let meta = BTreeMap::from([("hidden".to_owned(), "5,2".to_owned())]);
        let b = ModelBundle::new(scaler, Classifier::Mlp(m), HogParams::default(), meta).unwrap();
        let text = b.to_text();
        assert!(text.contains("\nmlp 3\nsizes 36 5 2 10\n"));
        assert_eq!(ModelBundle::from_text(&text).unwrap(), b);
    }

    #[test]
    fn extreme_values_round_trip() {
        for v in [
            f64::MIN_POSITIVE,
            5e-324,
            f64::MAX,
            -0.0,
            0.1,
            1.0 / 3.0,
            -123456.789e-100,
        ] {
            let mut s = String::new();
            push_numbers(&mut s, &[v]);
            assert_eq!(s.trim().parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    fn corrupt_line(text: &str) -> usize {
        match ModelBundle::from_text(text) {
            Err(ModelIoError::CorruptSection { line, .. }) => line,
            other => panic!("expected CorruptSection, got {other:?}"),
        }
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            ModelBundle::from_text(""),
            Err(ModelIoError::BadMagic)
        ));
        assert!(matches!(
            ModelBundle::from_text("PICKLE svm\n"),
            Err(ModelIoError::BadMagic)
        ));
        assert!(
            matches!(ModelBundle::from_text("HWR2 svm\n"), Err(ModelIoError::UnsupportedVersion(v)) if v == "HWR2")
        );
        assert_eq!(corrupt_line("HWR1 tree\n"), 1);
        let truncated: String = TINY_TEXT
            .lines()
            .take(7)
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(corrupt_line(&truncated), 8);
        let short_row = TINY_TEXT.replace("1.0000000000000000e0 -5.0000000000000000e-1\n", "1.0\n");
        assert_eq!(corrupt_line(&short_row), 7);
        let bad_number = TINY_TEXT.replace("2.5000000000000000e-1\nclass", "x\nclass");
        assert_eq!(corrupt_line(&bad_number), 8);
        let unsorted = TINY_TEXT.replace("c=1\nseed=1", "seed=1\nc=1");
        assert_eq!(corrupt_line(&unsorted), 15);
        let trailing = format!("{TINY_TEXT}junk\n");
        assert_eq!(corrupt_line(&trailing), 17);
        let no_end = TINY_TEXT.replace("end\n", "");
        assert_eq!(corrupt_line(&no_end), 16);
        let wrong_hog = TINY_TEXT.replace("orientations=2", "orientations=3");
        assert!(matches!(
            ModelBundle::from_text(&wrong_hog),
            Err(ModelIoError::DimensionMismatch {
                scaler: 2,
                classifier: 2,
                hog: 3
            })
        ));
    }

    #[test]
    fn bundle_rejects_bad_provenance() {
        let b = tiny_svm();
        let meta = BTreeMap::from([("a b".to_owned(), "1".to_owned())]);
        assert!(matches!(
            ModelBundle::new(b.scaler().clone(), b.classifier().clone(), *b.hog(), meta),
            Err(ModelIoError::InvalidMeta(_))
        ));
        let meta = BTreeMap::from([("k".to_owned(), "x\ny".to_owned())]);
        assert!(
            ModelBundle::new(b.scaler().clone(), b.classifier().clone(), *b.hog(), meta).is_err()
        );
    }

    #[test]
    fn predictions_survive_save_and_load() {
        let b = random_bundle(11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hwr1");
        b.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        b.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        let back = ModelBundle::load(&path).unwrap();
        let mut rng = SplitMix64::new(12);
        for _ in 0..100 {
            let x: Vec<f64> = (0..36).map(|_| rng.next_f64()).collect();
            assert_eq!(
                back.predict_features(&x).unwrap(),
                b.predict_features(&x).unwrap()
            );
            let sx = b.scaler().transform_row(&x).unwrap();
            let Classifier::Svm(m0) = b.classifier() else {
                unreachable!()
            };
            let Classifier::Svm(m1) = back.classifier() else {
                unreachable!()
            };
            let (d0, d1) = (m0.decision(&sx).unwrap(), m1.decision(&sx).unwrap());
            assert!(d0.iter().zip(&d1).all(|(a, c)| a.to_bits() == c.to_bits()));
        }
        assert!(matches!(
            b.predict_features(&[0.0; 3]),
            Err(ModelIoError::Feature(_))
        ));
    }
}
