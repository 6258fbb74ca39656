//! Dataset ingestion, random-projection feature reduction, synthetic anomaly
//! benchmarks and non-IID client partitioning.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoding::FeatureVector;
use crate::error::{Error, Result};

/// Partition attempts before giving up on a draw with an empty shard.
pub const PARTITION_RETRIES: usize = 100;

/// Additive smoothing applied to class distributions before KL.
pub const KL_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<FeatureVector>,
    pub n_classes: usize,
    pub normal_classes: BTreeSet<usize>,
    pub anomaly_classes: BTreeSet<usize>,
}

impl LabeledDataset {
    /// Builds a dataset whose labels lie in `0..n_classes`; every class not
    /// listed in `anomaly_classes` is normal.
    pub fn new(
        samples: Vec<FeatureVector>,
        n_classes: usize,
        anomaly_classes: BTreeSet<usize>,
    ) -> Result<Self> {
        if let Some(x) = samples.iter().find(|x| x.label >= n_classes) {
            return Err(Error::Label(format!(
                "label {} outside 0..{n_classes}",
                x.label
            )));
        }
        if let Some(c) = anomaly_classes.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Label(format!(
                "anomaly class {c} outside 0..{n_classes}"
            )));
        }
        if let Some(w) = samples.first().map(|x| x.values.len()) {
            if let Some((i, x)) = samples.iter().enumerate().find(|(_, x)| x.values.len() != w) {
                return Err(Error::Schema {
                    line: i + 1,
                    msg: format!("sample has {} features, expected {w}", x.values.len()),
                });
            }
        }
        let normal_classes = (0..n_classes)
            .filter(|c| !anomaly_classes.contains(c))
            .collect();
        Ok(Self {
            samples,
            n_classes,
            normal_classes,
            anomaly_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |x| x.values.len())
    }

    pub fn is_anomaly(&self, label: usize) -> bool {
        self.anomaly_classes.contains(&label)
    }

    /// Position of a normal class among the sorted normal classes; this is
    /// the class index the model head uses.
    pub fn normal_index(&self, label: usize) -> Option<usize> {
        if self.anomaly_classes.contains(&label) {
            return None;
        }
        self.normal_classes.iter().position(|&c| c == label)
    }

    pub fn n_normal_classes(&self) -> usize {
        self.normal_classes.len()
    }
}

fn looks_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Reads a comma-separated feature file: one sample per row, feature values
/// followed by an integer label. A first row with no numeric field is treated
/// as a header.
pub fn load_features(path: &Path, anomaly_classes: &BTreeSet<usize>) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{other:?}")),
        })?;

    let mut samples = Vec::new();
    let mut width: Option<usize> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: row + 1,
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if samples.is_empty() && width.is_none() && !record.iter().any(looks_numeric) {
            width = Some(record.len());
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Schema {
                line,
                msg: "need at least one feature and a label".into(),
            });
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(Error::Schema {
                    line,
                    msg: format!("row has {} fields, expected {w}", record.len()),
                })
            }
            _ => width = Some(record.len()),
        }
        let n = record.len() - 1;
        let values = record
            .iter()
            .take(n)
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("invalid number {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = record[n].parse::<usize>().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid label {:?}", &record[n]),
        })?;
        samples.push(FeatureVector::new(values, label));
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("{} contains no samples", path.display())));
    }
    let max_label = samples.iter().map(|x| x.label).max().unwrap_or(0);
    let max_anomaly = anomaly_classes.iter().copied().max().unwrap_or(0);
    LabeledDataset::new(samples, max_label.max(max_anomaly) + 1, anomaly_classes.clone())
}

/// Projects every sample to `target_dim` features with one shared Gaussian
/// matrix (entries `N(0, 1/target_dim)`). A target equal to the current
/// dimension returns the data unchanged.
pub fn reduce_features<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    target_dim: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let dim = dataset.feature_dim();
    if target_dim == 0 || target_dim > dim {
        return Err(Error::Shape(format!(
            "cannot project {dim} features to {target_dim}"
        )));
    }
    if target_dim == dim {
        return Ok(dataset.clone());
    }
    let scale = 1.0 / (target_dim as f64).sqrt();
    let matrix: Vec<f64> = (0..target_dim * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    let samples = dataset
        .samples
        .iter()
        .map(|x| {
            let values = matrix
                .chunks_exact(dim)
                .map(|row| row.iter().zip(&x.values).map(|(a, b)| a * b).sum())
                .collect();
            FeatureVector::new(values, x.label)
        })
        .collect();
    Ok(LabeledDataset {
        samples,
        ..dataset.clone()
    })
}

/// Parameters of the synthetic anomaly benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_normal_classes: usize,
    pub per_class: usize,
    pub n_anomaly: usize,
    pub dim: usize,
    /// Distance between any two normal class means, in units of the blob
    /// standard deviation.
    pub separation: f64,
}

fn orthonormal_directions<R: Rng + ?Sized>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if basis.len() < dim {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

/// Gaussian blobs (unit variance) for the normal classes, means placed on
/// mutually orthogonal directions at radius `separation / √2` so every pair is
/// exactly `separation` apart. Anomalies share the radius but point along the
/// normalised sum of all class directions plus one unused direction, which
/// keeps them outside every blob and ambiguous between classes.
///
/// Normal classes are labelled `0..n_normal_classes`; anomalies, if any, get
/// label `n_normal_classes`.
pub fn synth_anomaly_dataset<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<LabeledDataset> {
    if spec.dim < 2 {
        return Err(Error::config("synthetic.dim", "must be >= 2"));
    }
    if spec.n_normal_classes == 0 || spec.per_class == 0 {
        return Err(Error::config("synthetic", "need at least one normal class and sample"));
    }
    if !(spec.separation > 0.0) {
        return Err(Error::config("synthetic.separation", "must be positive"));
    }
    let c = spec.n_normal_classes;
    let dirs = orthonormal_directions(c + 1, spec.dim, rng);
    let radius = spec.separation / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = dirs[..c]
        .iter()
        .map(|d| d.iter().map(|x| x * radius).collect())
        .collect();

    let mut anomaly_dir = vec![0.0; spec.dim];
    for d in &dirs[..c] {
        anomaly_dir.iter_mut().zip(d).for_each(|(a, x)| *a += x / (c as f64).sqrt());
    }
    if c < spec.dim {
        anomaly_dir.iter_mut().zip(&dirs[c]).for_each(|(a, x)| *a += x);
    }
    let norm = anomaly_dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let anomaly_mean: Vec<f64> = anomaly_dir.iter().map(|x| x / norm * radius).collect();

    let draw = |mean: &[f64], label: usize, rng: &mut R| {
        let values = mean
            .iter()
            .map(|m| m + rng.sample::<f64, _>(StandardNormal))
            .collect();
        FeatureVector::new(values, label)
    };
    let mut samples = Vec::with_capacity(c * spec.per_class + spec.n_anomaly);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            samples.push(draw(mean, label, rng));
        }
    }
    for _ in 0..spec.n_anomaly {
        samples.push(draw(&anomaly_mean, c, rng));
    }
    let (n_classes, anomalies) = if spec.n_anomaly > 0 {
        (c + 1, BTreeSet::from([c]))
    } else {
        (c, BTreeSet::new())
    };
    LabeledDataset::new(samples, n_classes, anomalies)
}

/// Splits a dataset into normal-only training samples and a held-out set
/// holding `validation_fraction` of every normal class plus all anomalies.
pub fn holdout_split<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    validation_fraction: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::config(
            "validation_fraction",
            format!("must lie in [0, 1), got {validation_fraction}"),
        ));
    }
    let mut train = Vec::new();
    let mut held = Vec::new();
    for &class in &dataset.normal_classes {
        let mut members: Vec<&FeatureVector> =
            dataset.samples.iter().filter(|x| x.label == class).collect();
        members.shuffle(rng);
        let n_held = (members.len() as f64 * validation_fraction).round() as usize;
        held.extend(members[..n_held].iter().map(|&x| x.clone()));
        train.extend(members[n_held..].iter().map(|&x| x.clone()));
    }
    held.extend(
        dataset
            .samples
            .iter()
            .filter(|x| dataset.is_anomaly(x.label))
            .cloned(),
    );
    let rebuild = |samples| LabeledDataset {
        samples,
        ..dataset.clone()
    };
    Ok((rebuild(train), rebuild(held)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum PartitionScheme {
    Iid,
    /// Every client owns `⌈classes / clients⌉` classes; `remainder` of each
    /// class is spread uniformly over all clients.
    Step {
        #[serde(default = "default_remainder")]
        remainder: f64,
    },
    /// Per-class client proportions from a symmetric Dirichlet(`alpha`).
    Dirichlet { alpha: f64 },
}

fn default_remainder() -> f64 {
    0.05
}

impl PartitionScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PartitionScheme::Iid => Ok(()),
            PartitionScheme::Step { remainder } if !(0.0..=1.0).contains(&remainder) => Err(
                Error::config("partition.remainder", "must lie in [0, 1]"),
            ),
            PartitionScheme::Dirichlet { alpha } if !(alpha > 0.0) || !alpha.is_finite() => {
                Err(Error::config("partition.alpha", "must be a positive number"))
            }
            _ => Ok(()),
        }
    }
}

/// Client shards as index lists into the partitioned dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedDataset {
    pub scheme: PartitionScheme,
    pub shards: Vec<Vec<usize>>,
}

impl PartitionedDataset {
    pub fn n_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    pub fn shard_samples(&self, dataset: &LabeledDataset, client: usize) -> Vec<FeatureVector> {
        self.shards[client]
            .iter()
            .map(|&i| dataset.samples[i].clone())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("partition manifest: {e}")))
    }
}

/// One draw from a symmetric Dirichlet(`alpha`) over `n` categories.
///
/// Sampled in log space (`log G = log Gamma(α+1) + log(U)/α`) so that very
/// small `alpha` does not underflow every component to zero.
pub fn dirichlet_proportions<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha + 1 is a valid shape");
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn class_members(dataset: &LabeledDataset) -> Vec<(usize, Vec<usize>)> {
    let classes: BTreeSet<usize> = dataset.samples.iter().map(|x| x.label).collect();
    classes
        .into_iter()
        .map(|c| {
            let idx = dataset
                .samples
                .iter()
                .enumerate()
                .filter(|(_, x)| x.label == c)
                .map(|(i, _)| i)
                .collect();
            (c, idx)
        })
        .collect()
}

fn draw_partition<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    scheme: PartitionScheme,
    n_clients: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut shards = vec![Vec::new(); n_clients];
    match scheme {
        PartitionScheme::Iid => {
            let mut idx: Vec<usize> = (0..dataset.len()).collect();
            idx.shuffle(rng);
            let base = idx.len() / n_clients;
            let extra = idx.len() % n_clients;
            let mut start = 0;
            for (k, shard) in shards.iter_mut().enumerate() {
                let size = base + usize::from(k < extra);
                shard.extend_from_slice(&idx[start..start + size]);
                start += size;
            }
        }
        PartitionScheme::Dirichlet { alpha } => {
            for (_, mut members) in class_members(dataset) {
                members.shuffle(rng);
                let props = dirichlet_proportions(alpha, n_clients, rng);
                let m = members.len();
                let mut cum = 0.0;
                let mut start = 0;
                for (k, p) in props.iter().enumerate() {
                    cum += p;
                    let end = if k + 1 == n_clients {
                        m
                    } else {
                        ((cum * m as f64).round() as usize).clamp(start, m)
                    };
                    shards[k].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
        }
        PartitionScheme::Step { remainder } => {
            let classes = class_members(dataset);
            let n_classes = classes.len();
            let per_client = n_classes.div_ceil(n_clients);
            let mut owners = vec![Vec::new(); n_classes];
            for client in 0..n_clients {
                for j in 0..per_client {
                    owners[(client * per_client + j) % n_classes].push(client);
                }
            }
            for (pos, (_, members)) in classes.into_iter().enumerate() {
                for i in members {
                    let client = if rng.random::<f64>() < remainder {
                        rng.random_range(0..n_clients)
                    } else {
                        *owners[pos].choose(rng).expect("every class has an owner")
                    };
                    shards[client].push(i);
                }
            }
        }
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    shards
}

/// Splits `dataset` across `n_clients`, redrawing (up to
/// [`PARTITION_RETRIES`] times) until no shard is empty.
pub fn partition<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    scheme: PartitionScheme,
    n_clients: usize,
    rng: &mut R,
) -> Result<PartitionedDataset> {
    scheme.validate()?;
    if n_clients == 0 {
        return Err(Error::config("n_clients", "must be >= 1"));
    }
    if dataset.len() < n_clients {
        return Err(Error::Partition(format!(
            "{} samples cannot fill {n_clients} shards",
            dataset.len()
        )));
    }
    for _ in 0..PARTITION_RETRIES {
        let shards = draw_partition(dataset, scheme, n_clients, rng);
        if shards.iter().all(|s| !s.is_empty()) {
            return Ok(PartitionedDataset { scheme, shards });
        }
    }
    Err(Error::Partition(format!(
        "no draw without empty shards after {PARTITION_RETRIES} attempts"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    /// `histograms[client][class]`.
    pub histograms: Vec<Vec<usize>>,
    pub avg_pairwise_kl: f64,
}

fn smoothed(hist: &[usize]) -> Vec<f64> {
    let total: usize = hist.iter().sum();
    let raw: Vec<f64> = hist
        .iter()
        .map(|&h| if total == 0 { 0.0 } else { h as f64 / total as f64 } + KL_SMOOTHING)
        .collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Class histograms per client and the mean symmetrised KL divergence
/// `(KL(p‖q) + KL(q‖p)) / 2` over unordered client pairs, on class
/// distributions smoothed by adding [`KL_SMOOTHING`] and renormalising.
pub fn heterogeneity(partitioned: &PartitionedDataset, dataset: &LabeledDataset) -> PartitionStats {
    let histograms: Vec<Vec<usize>> = partitioned
        .shards
        .iter()
        .map(|shard| {
            let mut h = vec![0usize; dataset.n_classes];
            for &i in shard {
                h[dataset.samples[i].label] += 1;
            }
            h
        })
        .collect();
    let dists: Vec<Vec<f64>> = histograms.iter().map(|h| smoothed(h)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..dists.len() {
        for b in a + 1..dists.len() {
            total += (kl(&dists[a], &dists[b]) + kl(&dists[b], &dists[a])) / 2.0;
            pairs += 1;
        }
    }
    PartitionStats {
        histograms,
        avg_pairwise_kl: if pairs == 0 { 0.0 } else { total / pairs as f64 },
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::seed;

    fn labeled(labels: &[usize], n_classes: usize) -> LabeledDataset {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| FeatureVector::new(vec![i as f64 + 1.0, 1.0], l))
            .collect();
        LabeledDataset::new(samples, n_classes, BTreeSet::new()).unwrap()
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_two_rows() {
        let f = write("f0,f1,label\n0.5,1.5,0\n-2,3e-1,4\n");
        let d = load_features(f.path(), &BTreeSet::from([4])).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.samples[0], FeatureVector::new(vec![0.5, 1.5], 0));
        assert_eq!(d.samples[1].label, 4);
        assert_eq!(d.n_classes, 5);
        assert!(d.is_anomaly(4));
        assert_eq!(d.normal_index(3), Some(3));
    }

    #[test]
    fn load_errors_name_the_line() {
        let f = write("1.0,2.0,0\n1.0,abc,1\n");
        match load_features(f.path(), &BTreeSet::new()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write("1.0,2.0,0\n1.0,1\n");
        assert!(matches!(
            load_features(f.path(), &BTreeSet::new()),
            Err(Error::Schema { line: 2, .. })
        ));
        let f = write("");
        assert!(matches!(load_features(f.path(), &BTreeSet::new()), Err(Error::Data(_))));
        assert!(matches!(
            load_features(Path::new("/nonexistent/x.csv"), &BTreeSet::new()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn projection_identity_and_seed() {
        let d = labeled(&[0, 1, 0], 2);
        assert_eq!(reduce_features(&d, 2, &mut seed::from_seed(0)).unwrap(), d);
        assert!(matches!(reduce_features(&d, 3, &mut seed::from_seed(0)), Err(Error::Shape(_))));
        let wide = LabeledDataset::new(
            (0..5).map(|i| FeatureVector::new(vec![i as f64; 10], 0)).collect(),
            1,
            BTreeSet::new(),
        )
        .unwrap();
        let a = reduce_features(&wide, 4, &mut seed::from_seed(3)).unwrap();
        let b = reduce_features(&wide, 4, &mut seed::from_seed(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.feature_dim(), 4);
    }

    #[test]
    fn synth_basics() {
        let spec = SynthSpec { n_normal_classes: 3, per_class: 20, n_anomaly: 0, dim: 8, separation: 10.0 };
        let d = synth_anomaly_dataset(&spec, &mut seed::from_seed(1)).unwrap();
        assert!(d.anomaly_classes.is_empty());
        assert_eq!(d.len(), 60);
        assert_eq!(d, synth_anomaly_dataset(&spec, &mut seed::from_seed(1)).unwrap());
        let with = SynthSpec { n_anomaly: 7, ..spec };
        let d = synth_anomaly_dataset(&with, &mut seed::from_seed(1)).unwrap();
        assert_eq!(d.anomaly_classes, BTreeSet::from([3]));
        assert_eq!(d.samples.iter().filter(|x| x.label == 3).count(), 7);
        assert!(synth_anomaly_dataset(&SynthSpec { dim: 1, ..spec }, &mut seed::from_seed(1)).is_err());
    }

    #[test]
    fn holdout_keeps_anomalies_out_of_training() {
        let spec = SynthSpec { n_normal_classes: 2, per_class: 10, n_anomaly: 5, dim: 4, separation: 5.0 };
        let d = synth_anomaly_dataset(&spec, &mut seed::from_seed(2)).unwrap();
        let (train, held) = holdout_split(&d, 0.2, &mut seed::from_seed(0)).unwrap();
        assert_eq!(train.len(), 16);
        assert!(train.samples.iter().all(|x| !d.is_anomaly(x.label)));
        assert_eq!(held.len(), 4 + 5);
    }

    #[test]
    fn iid_split_sizes() {
        let d = labeled(&vec![0; 100], 1);
        let p = partition(&d, PartitionScheme::Iid, 2, &mut seed::from_seed(0)).unwrap();
        assert_eq!(p.shard_sizes(), vec![50, 50]);
    }

    #[test]
    fn dirichlet_proportions_sum_to_one() {
        let mut rng = seed::from_seed(5);
        for alpha in [0.01, 0.1, 1.0, 10.0] {
            let p = dirichlet_proportions(alpha, 10, &mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn partitions_are_complete_and_disjoint() {
        let labels: Vec<usize> = (0..300).map(|i| i % 6).collect();
        let d = labeled(&labels, 6);
        for scheme in [
            PartitionScheme::Iid,
            PartitionScheme::Step { remainder: 0.05 },
            PartitionScheme::Dirichlet { alpha: 0.1 },
        ] {
            let p = partition(&d, scheme, 4, &mut seed::from_seed(9)).unwrap();
            let mut all: Vec<usize> = p.shards.concat();
            all.sort_unstable();
            assert_eq!(all, (0..300).collect::<Vec<_>>(), "{scheme:?}");
            assert!(p.shards.iter().all(|s| !s.is_empty()));
            let stats = heterogeneity(&p, &d);
            for (h, s) in stats.histograms.iter().zip(&p.shards) {
                assert_eq!(h.iter().sum::<usize>(), s.len());
            }
        }
    }

    #[test]
    fn step_is_block_diagonal() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let d = labeled(&labels, 10);
        let p = partition(&d, PartitionScheme::Step { remainder: 0.05 }, 10, &mut seed::from_seed(1)).unwrap();
        let stats = heterogeneity(&p, &d);
        for (client, h) in stats.histograms.iter().enumerate() {
            let own = h[client] as f64 / h.iter().sum::<usize>() as f64;
            assert!(own > 0.8, "client {client}: {h:?}");
        }
    }

    #[test]
    fn partition_errors() {
        let d = labeled(&[0, 1], 2);
        assert!(matches!(
            partition(&d, PartitionScheme::Iid, 3, &mut seed::from_seed(0)),
            Err(Error::Partition(_))
        ));
        // a single sample per class with a near-degenerate Dirichlet cannot
        // cover three clients
        let d = labeled(&[0, 0, 0], 1);
        assert!(matches!(
            partition(&d, PartitionScheme::Dirichlet { alpha: 1e-4 }, 3, &mut seed::from_seed(0)),
            Err(Error::Partition(_))
        ));
        assert!(partition(&d, PartitionScheme::Dirichlet { alpha: -1.0 }, 1, &mut seed::from_seed(0)).is_err());
    }

    #[test]
    fn kl_examples() {
        let d = labeled(&[0, 1, 0, 1], 2);
        let same = PartitionedDataset { scheme: PartitionScheme::Iid, shards: vec![vec![0, 1], vec![2, 3]] };
        assert_eq!(heterogeneity(&same, &d).avg_pairwise_kl, 0.0);

        let disjoint = PartitionedDataset { scheme: PartitionScheme::Iid, shards: vec![vec![0, 2], vec![1, 3]] };
        let hi = (1.0 + KL_SMOOTHING) / (1.0 + 2.0 * KL_SMOOTHING);
        let lo = KL_SMOOTHING / (1.0 + 2.0 * KL_SMOOTHING);
        let expected = (hi - lo) * (hi / lo).ln();
        let got = heterogeneity(&disjoint, &d).avg_pairwise_kl;
        assert!((got - expected).abs() < 1e-12 * expected, "{got} vs {expected}");
    }

    #[test]
    fn manifest_json_round_trip() {
        let p = PartitionedDataset { scheme: PartitionScheme::Dirichlet { alpha: 0.1 }, shards: vec![vec![0, 3], vec![1, 2]] };
        assert_eq!(PartitionedDataset::from_json(&p.to_json()).unwrap(), p);
    }
}
