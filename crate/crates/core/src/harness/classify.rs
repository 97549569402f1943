use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};
use crate::metrics::{distance_matrix, MetricConfig, MetricKind, SystemSummary};

/// Monte-Carlo nested cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSpec {
    pub iterations: usize,
    pub test_fraction: f64,
    pub inner_folds: usize,
    pub k_max: usize,
    /// Candidate trade-offs searched for the spectral-Grassmann metric.
    pub eta_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CvSpec {
    fn default() -> Self {
        Self {
            iterations: 10,
            test_fraction: 0.3,
            inner_folds: 5,
            k_max: 10,
            eta_grid: vec![0.01, 0.1, 0.5, 0.9, 0.99],
            seed: 0,
        }
    }
}

impl CvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(SgotError::Parameter("at least one iteration is needed".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(SgotError::Parameter(format!("test fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.inner_folds < 2 {
            return Err(SgotError::Parameter("inner cross-validation needs >= 2 folds".into()));
        }
        if self.k_max == 0 {
            return Err(SgotError::Parameter("k_max must be >= 1".into()));
        }
        if self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(SgotError::Parameter("eta grid must be nonempty with values in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub metric: String,
    pub n_samples: usize,
    pub classes: Vec<String>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub selected_k: Vec<usize>,
    /// Selected trade-off per iteration, when candidates were indexed by one.
    pub selected_eta: Vec<Option<f64>>,
}

/// A labeled distance matrix candidate; `eta` names the candidate.
pub type Candidate = (Option<f64>, DMatrix<f64>);

/// Majority vote among the `k` nearest training points. Ties go to the
/// tied class with the smallest summed distance, then to the smaller label.
pub fn knn_predict<'a>(dist: &DMatrix<f64>, query: usize, train: &[usize], labels: &'a [String], k: usize) -> &'a str {
    let mut order: Vec<usize> = train.to_vec();
    order.sort_by(|&a, &b| dist[(query, a)].total_cmp(&dist[(query, b)]).then(a.cmp(&b)));
    let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for &j in order.iter().take(k.max(1)) {
        let e = votes.entry(labels[j].as_str()).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += dist[(query, j)];
    }
    votes
        .into_iter()
        .min_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.total_cmp(&b.1 .1)).then(a.0.cmp(b.0)))
        .map(|(l, _)| l)
        .unwrap_or("")
}

fn by_class(indices: &[usize], labels: &[String]) -> BTreeMap<String, Vec<usize>> {
    let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        m.entry(labels[i].clone()).or_default().push(i);
    }
    m
}

fn stratified_split(labels: &[String], frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..labels.len()).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_class(&all, labels) {
        idx.shuffle(rng);
        let n_test = ((idx.len() as f64 * frac).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn stratified_folds(train: &[usize], labels: &[String], folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for (_, mut idx) in by_class(train, labels) {
        idx.shuffle(rng);
        for (p, i) in idx.into_iter().enumerate() {
            out[(p + offset) % folds].push(i);
        }
        offset += 1;
    }
    out.retain(|f| !f.is_empty());
    out
}

fn accuracy(dist: &DMatrix<f64>, queries: &[usize], train: &[usize], labels: &[String], k: usize) -> (usize, usize) {
    let hits = queries.iter().filter(|&&q| knn_predict(dist, q, train, labels, k) == labels[q]).count();
    (hits, queries.len())
}

/// k-NN on precomputed distances under Monte-Carlo nested cross-validation:
/// each iteration draws a stratified train/test split, selects the neighbor
/// count and candidate matrix by inner stratified k-fold accuracy on the
/// training part, and scores the test part.
pub fn classify(candidates: &[Candidate], labels: &[String], metric: &str, cv: &CvSpec) -> Result<ClassifyReport> {
    cv.validate()?;
    let n = labels.len();
    if candidates.is_empty() {
        return Err(SgotError::Parameter("no distance matrix supplied".into()));
    }
    for (_, d) in candidates {
        if d.shape() != (n, n) {
            return Err(SgotError::Dimension(format!("distance matrix is {:?} for {n} labels", d.shape())));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(SgotError::Numerical("distance matrix has non-finite entries".into()));
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let classes = by_class(&all, labels);
    if classes.len() < 2 {
        return Err(SgotError::Stratification(format!("need at least two classes, found {}", classes.len())));
    }
    if let Some((c, idx)) = classes.iter().find(|(_, v)| v.len() < 2) {
        return Err(SgotError::Stratification(format!("class '{c}' has {} member(s), need >= 2", idx.len())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cv.seed);
    let mut report = ClassifyReport {
        metric: metric.to_string(),
        n_samples: n,
        classes: classes.keys().cloned().collect(),
        accuracies: Vec::new(),
        mean: 0.0,
        std: 0.0,
        selected_k: Vec::new(),
        selected_eta: Vec::new(),
    };
    for _ in 0..cv.iterations {
        let (train, test) = stratified_split(labels, cv.test_fraction, &mut rng);
        let folds = stratified_folds(&train, labels, cv.inner_folds, &mut rng);
        let mut best: Option<(f64, usize, usize)> = None;
        for (ci, (_, dist)) in candidates.iter().enumerate() {
            for k in 1..=cv.k_max {
                let (mut hits, mut total) = (0, 0);
                for f in &folds {
                    let inner: Vec<usize> = train.iter().copied().filter(|i| !f.contains(i)).collect();
                    if inner.is_empty() {
                        continue;
                    }
                    let (h, t) = accuracy(dist, f, &inner, labels, k.min(inner.len()));
                    hits += h;
                    total += t;
                }
                let acc = if total > 0 { hits as f64 / total as f64 } else { 0.0 };
                if best.is_none_or(|(b, _, _)| acc > b) {
                    best = Some((acc, ci, k));
                }
            }
        }
        let (_, ci, k) = best.expect("candidate grid is nonempty");
        let k = k.min(train.len());
        let (h, t) = accuracy(&candidates[ci].1, &test, &train, labels, k);
        report.accuracies.push(h as f64 / t as f64);
        report.selected_k.push(k);
        report.selected_eta.push(candidates[ci].0);
    }
    let m = report.accuracies.len() as f64;
    report.mean = report.accuracies.iter().sum::<f64>() / m;
    report.std = if m > 1.0 {
        (report.accuracies.iter().map(|a| (a - report.mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(report)
}

/// Distance matrices for one metric and the cross-validated report. The
/// spectral-Grassmann metric searches over `cv.eta_grid`; the other metrics
/// use `cfg` as given.
pub fn classify_systems(systems: &[SystemSummary], labels: &[String], cfg: &MetricConfig, cv: &CvSpec) -> Result<ClassifyReport> {
    cv.validate()?;
    cfg.validate()?;
    if systems.len() != labels.len() {
        return Err(SgotError::Dimension(format!("{} systems for {} labels", systems.len(), labels.len())));
    }
    let candidates: Vec<Candidate> = if cfg.kind == MetricKind::Sgot {
        cv.eta_grid
            .iter()
            .map(|&eta| Ok((Some(eta), distance_matrix(systems, &MetricConfig { eta, ..*cfg })?)))
            .collect::<Result<_>>()?
    } else {
        vec![(None, distance_matrix(systems, cfg)?)]
    };
    classify(&candidates, labels, cfg.kind.name(), cv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

/// Read a `(path, label)` CSV manifest. A `path,label` header is optional;
/// relative paths resolve against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SgotError::Parse(format!("manifest row {}: {e}", k + 1)))?;
        if rec.len() != 2 {
            return Err(SgotError::Parse(format!("manifest row {} has {} fields, expected 2", k + 1, rec.len())));
        }
        if k == 0 && &rec[0] == "path" && &rec[1] == "label" {
            continue;
        }
        let p = PathBuf::from(&rec[0]);
        out.push(ManifestEntry { path: if p.is_absolute() { p } else { dir.join(p) }, label: rec[1].to_string() });
    }
    if out.is_empty() {
        return Err(SgotError::InsufficientData("manifest lists no trajectories".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters(n: usize) -> (DMatrix<f64>, Vec<String>) {
        let pos: Vec<f64> = (0..2 * n).map(|i| if i < n { i as f64 * 0.01 } else { 10.0 + i as f64 * 0.01 }).collect();
        let d = DMatrix::from_fn(2 * n, 2 * n, |i, j| (pos[i] - pos[j]).abs());
        let labels = (0..2 * n).map(|i| if i < n { "a".to_string() } else { "b".to_string() }).collect();
        (d, labels)
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let (d, l) = two_clusters(10);
        let r = classify(&[(None, d)], &l, "toy", &CvSpec::default()).unwrap();
        assert_eq!(r.accuracies.len(), 10);
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.std, 0.0);
        assert!(r.selected_eta.iter().all(Option::is_none));
    }

    #[test]
    fn picks_informative_candidate() {
        let (good, l) = two_clusters(8);
        let noise = DMatrix::from_fn(16, 16, |i, j| if i == j { 0.0 } else { ((i * 7 + j * 7) % 5) as f64 + 1.0 });
        let r = classify(&[(Some(0.1), noise), (Some(0.9), good)], &l, "toy", &CvSpec::default()).unwrap();
        assert!(r.selected_eta.iter().all(|e| *e == Some(0.9)));
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let (d, mut l) = two_clusters(6);
        l.swap(0, 7);
        let cv = CvSpec { seed: 5, ..CvSpec::default() };
        let a = classify(&[(None, d.clone())], &l, "toy", &cv).unwrap();
        let b = classify(&[(None, d)], &l, "toy", &cv).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stratification_errors() {
        let (d, _) = two_clusters(3);
        let one = vec!["a".to_string(); 6];
        assert!(matches!(classify(&[(None, d.clone())], &one, "x", &CvSpec::default()), Err(SgotError::Stratification(_))));
        let mut lonely = vec!["a".to_string(); 5];
        lonely.push("b".into());
        assert!(matches!(classify(&[(None, d)], &lonely, "x", &CvSpec::default()), Err(SgotError::Stratification(_))));
    }

    #[test]
    fn knn_tie_breaks_by_distance() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let l = vec!["q".to_string(), "a".to_string(), "b".to_string()];
        assert_eq!(knn_predict(&d, 0, &[1, 2], &l, 2), "a");
        assert_eq!(knn_predict(&d, 2, &[0, 1], &l, 2), "a");
    }

    #[test]
    fn manifest_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,label\nx.csv,a\n/abs/y.csv,b\n").unwrap();
        let m = read_manifest(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].path, dir.path().join("x.csv"));
        assert_eq!(m[1].path, PathBuf::from("/abs/y.csv"));
        std::fs::write(&p, "x.csv\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(SgotError::Parse(_))));
    }
}
