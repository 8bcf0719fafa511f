//! Repeated train/test experiments with resampling.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Class, ConfusionCounts, MetricsReport};
use super::EvalError;
use crate::classifier::{fit, HmcdArchitecture, TrainConfig, TrainedModel};
use crate::features::{featurize_flow, Sample};
use crate::gaf::{build_dictionary, templates_from, GafConfig, GafGenerator};
use crate::http::{Flow, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub malicious: usize,
    pub benign: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub train: ClassCounts,
    pub test: ClassCounts,
    pub gaf_count: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Draw fresh train and test sets for every run; otherwise every run
    /// reuses the first run's sets and only the model seed changes.
    pub resample: bool,
}

/// Named experiment presets. Desk-scale versions (the defaults) are the
/// full-scale counts divided by 20.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let (base, full) = match name.strip_suffix("-full") {
        Some(b) => (b, true),
        None => (name.strip_suffix("-desk").unwrap_or(name), false),
    };
    let test = match base {
        "ep1" => (10_000, 10_000),
        "ep2" => (30_000, 30_000),
        "ep3" => (27_474, 30_000),
        "ep4" => (3_138, 4_000),
        _ => return None,
    };
    let scale = |n: usize| if full { n } else { (n + 10) / 20 };
    Some(ExperimentConfig {
        id: name.to_string(),
        train: ClassCounts {
            malicious: scale(20_000),
            benign: scale(50_000),
        },
        test: ClassCounts {
            malicious: scale(test.0),
            benign: scale(test.1),
        },
        gaf_count: scale(10_000),
        repeats: 5,
        seed: 0,
        resample: true,
    })
}

/// Produces a trained detector for one run.
pub trait ModelFactory: Sync {
    fn train(&self, train: &[Sample], gafs: &[Sample], seed: u64) -> Result<Box<dyn Detector>, EvalError>;
}

pub trait Detector {
    fn predict(&self, samples: &[Sample]) -> Result<Vec<Class>, EvalError>;
}

/// Generates adversarial flows from a run's training flows.
pub trait GafProvider: Sync {
    fn generate(&self, train: &[&Flow], count: usize, seed: u64) -> Result<Vec<Flow>, EvalError>;
}

/// The hybrid classifier, trained once per run on the run's data.
pub struct HmcdFactory {
    pub arch: HmcdArchitecture,
    pub config: TrainConfig,
}

impl Detector for TrainedModel {
    fn predict(&self, samples: &[Sample]) -> Result<Vec<Class>, EvalError> {
        samples
            .iter()
            .map(|s| Ok(self.classify(s).map_err(|e| EvalError::Model(e.to_string()))?.0))
            .collect()
    }
}

impl ModelFactory for HmcdFactory {
    fn train(&self, train: &[Sample], gafs: &[Sample], seed: u64) -> Result<Box<dyn Detector>, EvalError> {
        let all: Vec<&Sample> = train.iter().chain(gafs).collect();
        let model = fit(&self.arch, &all, &self.config, seed).map_err(|e| EvalError::Model(e.to_string()))?;
        Ok(Box::new(model))
    }
}

/// Field-GAN generation: dictionary and GANs are rebuilt from each run's
/// training flows.
pub struct FieldGanProvider {
    pub threshold: u64,
    pub config: GafConfig,
}

impl GafProvider for FieldGanProvider {
    fn generate(&self, train: &[&Flow], count: usize, seed: u64) -> Result<Vec<Flow>, EvalError> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let err = |e: crate::gaf::GafError| EvalError::Gaf(e.to_string());
        let (mal, ben): (Vec<Flow>, Vec<Flow>) =
            train.iter().map(|f| (*f).clone()).partition(|f| f.label == Label::Malicious);
        let dict = build_dictionary(&mal, &ben, self.threshold).map_err(err)?;
        let templates = templates_from(&ben);
        let generator = GafGenerator::train(dict, &templates, &ben, self.config.clone(), seed).map_err(err)?;
        generator.generate(count, &templates, seed).map_err(err)
    }
}

struct Pool<'a> {
    flows: Vec<&'a Flow>,
    samples: Vec<Sample>,
    malicious: Vec<usize>,
    benign: Vec<usize>,
}

impl<'a> Pool<'a> {
    /// Featurizes labeled flows; flows that cannot be featurized are left
    /// out of sampling.
    fn new(flows: &'a [Flow]) -> Self {
        let mut pool = Pool {
            flows: Vec::new(),
            samples: Vec::new(),
            malicious: Vec::new(),
            benign: Vec::new(),
        };
        for f in flows {
            let Some(s) = featurize_flow(f).sample() else { continue };
            let i = pool.samples.len();
            match f.label {
                Label::Malicious => pool.malicious.push(i),
                Label::Benign => pool.benign.push(i),
                Label::Unlabeled => continue,
            }
            pool.flows.push(f);
            pool.samples.push(s);
        }
        pool
    }
}

fn draw(
    from: &[usize],
    exclude: &[usize],
    n: usize,
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<Vec<usize>, EvalError> {
    let avail: Vec<usize> = from.iter().copied().filter(|i| exclude.binary_search(i).is_err()).collect();
    if avail.len() < n {
        return Err(EvalError::InsufficientData(format!(
            "{what}: {n} requested, {} available",
            avail.len()
        )));
    }
    let mut picked: Vec<usize> = avail.choose_multiple(rng, n).copied().collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Indices drawn for one run: test first, so the test set never depends
/// on the training draw or on the GAF count.
struct Draw {
    test: Vec<usize>,
    train: Vec<usize>,
}

fn draw_run(
    config: &ExperimentConfig,
    train_pool: &Pool,
    test_pool: &Pool,
    same_pool: bool,
    seed: u64,
) -> Result<Draw, EvalError> {
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed);
    test_rng.set_stream(31);
    let mut test = draw(&test_pool.malicious, &[], config.test.malicious, &mut test_rng, "test malicious")?;
    test.extend(draw(&test_pool.benign, &[], config.test.benign, &mut test_rng, "test benign")?);
    test.sort_unstable();
    let exclude: &[usize] = if same_pool { &test } else { &[] };
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    train_rng.set_stream(32);
    let mut train = draw(&train_pool.malicious, exclude, config.train.malicious, &mut train_rng, "train malicious")?;
    train.extend(draw(&train_pool.benign, exclude, config.train.benign, &mut train_rng, "train benign")?);
    train.sort_unstable();
    Ok(Draw { test, train })
}

/// Per-run outcome kept for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub gaf_samples: usize,
    pub counts: ConfusionCounts,
}

/// Runs the experiment. Without a separate `test` corpus the test set is
/// drawn from `train` and kept disjoint from the training draw.
pub fn run_experiment(
    config: &ExperimentConfig,
    train: &[Flow],
    test: Option<&[Flow]>,
    factory: &dyn ModelFactory,
    gafs: Option<&dyn GafProvider>,
) -> Result<(MetricsReport, Vec<RunRecord>), EvalError> {
    if config.repeats == 0 {
        return Err(EvalError::UndefinedMetric("zero repeats".into()));
    }
    if config.gaf_count > 0 && gafs.is_none() {
        return Err(EvalError::Gaf("GAFs requested without a generator".into()));
    }
    let train_pool = Pool::new(train);
    let separate = test.map(Pool::new);
    let (test_pool, same) = match &separate {
        Some(p) => (p, false),
        None => (&train_pool, true),
    };
    let mut records = Vec::with_capacity(config.repeats);
    let mut fixed = None;
    for run in 0..config.repeats {
        let seed = config.seed.wrapping_add(run as u64);
        let d = if config.resample || fixed.is_none() {
            let d = draw_run(config, &train_pool, test_pool, same, seed)?;
            if !config.resample {
                fixed = Some((d.test.clone(), d.train.clone()));
            }
            d
        } else {
            let (test, train) = fixed.clone().expect("set on first run");
            Draw { test, train }
        };
        let train_samples: Vec<Sample> = d.train.iter().map(|&i| train_pool.samples[i].clone()).collect();
        let test_samples: Vec<Sample> = d.test.iter().map(|&i| test_pool.samples[i].clone()).collect();
        let gaf_samples: Vec<Sample> = match gafs {
            Some(provider) if config.gaf_count > 0 => {
                let flows: Vec<&Flow> = d.train.iter().map(|&i| train_pool.flows[i]).collect();
                provider
                    .generate(&flows, config.gaf_count, seed)?
                    .iter()
                    .filter_map(|f| featurize_flow(f).sample())
                    .collect()
            }
            _ => Vec::new(),
        };
        let detector = factory.train(&train_samples, &gaf_samples, seed)?;
        let predicted = detector.predict(&test_samples)?;
        let truth: Vec<Class> = test_samples
            .iter()
            .map(|s| Class::from_label(s.label).expect("pool holds labeled samples"))
            .collect();
        let counts = super::metrics::confusion(&truth, &predicted)?;
        info!("{} run {}: {counts:?}", config.id, run + 1);
        records.push(RunRecord {
            seed,
            train_ids: train_samples.iter().map(|s| s.flow_id.clone()).collect(),
            test_ids: test_samples.iter().map(|s| s.flow_id.clone()).collect(),
            gaf_samples: gaf_samples.len(),
            counts,
        });
    }
    let runs: Vec<(u64, ConfusionCounts)> = records.iter().map(|r| (r.seed, r.counts)).collect();
    Ok((metrics(&config.id, &runs)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{separable_flows, MALICIOUS_MARKER};

    /// Flags a flow as malicious when the marker shows up in its first image.
    struct MarkerDetector;

    impl Detector for MarkerDetector {
        fn predict(&self, samples: &[Sample]) -> Result<Vec<Class>, EvalError> {
            Ok(samples
                .iter()
                .map(|s| {
                    let bytes = s.images[0].to_bytes();
                    if bytes.windows(MALICIOUS_MARKER.len()).any(|w| w == MALICIOUS_MARKER.as_bytes())
                        || bytes.windows(4).any(|w| w == b"Wget" || w == b"pyth")
                    {
                        Class::Malicious
                    } else {
                        Class::Benign
                    }
                })
                .collect())
        }
    }

    struct MarkerFactory;

    impl ModelFactory for MarkerFactory {
        fn train(&self, _: &[Sample], _: &[Sample], _: u64) -> Result<Box<dyn Detector>, EvalError> {
            Ok(Box::new(MarkerDetector))
        }
    }

    /// Copies training flows under new ids.
    struct CopyProvider;

    impl GafProvider for CopyProvider {
        fn generate(&self, train: &[&Flow], count: usize, seed: u64) -> Result<Vec<Flow>, EvalError> {
            Ok((0..count)
                .map(|i| {
                    let mut f = train[i % train.len()].clone();
                    f.flow_id = format!("copy-{seed}-{i}");
                    f.label = Label::Malicious;
                    f
                })
                .collect())
        }
    }

    fn config(gaf_count: usize) -> ExperimentConfig {
        ExperimentConfig {
            id: "t".into(),
            train: ClassCounts { malicious: 20, benign: 30 },
            test: ClassCounts { malicious: 10, benign: 10 },
            gaf_count,
            repeats: 3,
            seed: 5,
            resample: true,
        }
    }

    #[test]
    fn runs_are_deterministic_and_disjoint() {
        let flows = separable_flows(60, 1);
        let run = || run_experiment(&config(0), &flows, None, &MarkerFactory, None).unwrap();
        let (report, records) = run();
        assert_eq!(run().1, records);
        assert_eq!(report.runs.len(), 3);
        assert_eq!(report.f1.unwrap().mean, 1.0);
        for r in &records {
            assert_eq!((r.train_ids.len(), r.test_ids.len()), (50, 20));
            assert!(r.test_ids.iter().all(|id| !r.train_ids.contains(id)));
        }
        assert_ne!(records[0].test_ids, records[1].test_ids);
    }

    #[test]
    fn gaf_count_does_not_change_test_sets() {
        let flows = separable_flows(60, 2);
        let (_, plain) = run_experiment(&config(0), &flows, None, &MarkerFactory, None).unwrap();
        let (_, with) =
            run_experiment(&config(7), &flows, None, &MarkerFactory, Some(&CopyProvider)).unwrap();
        for (a, b) in plain.iter().zip(&with) {
            assert_eq!(a.test_ids, b.test_ids);
            assert_eq!(a.train_ids, b.train_ids);
            assert_eq!((a.gaf_samples, b.gaf_samples), (0, 7));
        }
    }

    #[test]
    fn fixed_sets_without_resampling() {
        let flows = separable_flows(60, 3);
        let mut c = config(0);
        c.resample = false;
        let (_, records) = run_experiment(&c, &flows, None, &MarkerFactory, None).unwrap();
        assert!(records.windows(2).all(|w| w[0].test_ids == w[1].test_ids));
        assert_eq!(records[2].seed, 7);
    }

    #[test]
    fn separate_test_corpus_and_shortfall() {
        let train = separable_flows(30, 4);
        let test = separable_flows(10, 9);
        let (_, records) = run_experiment(&config(0), &train, Some(&test), &MarkerFactory, None).unwrap();
        assert!(records[0].test_ids.iter().all(|id| id.starts_with("synth-9-")));
        let small = separable_flows(20, 4);
        assert!(matches!(
            run_experiment(&config(0), &small, None, &MarkerFactory, None),
            Err(EvalError::InsufficientData(_))
        ));
        assert!(matches!(
            run_experiment(&config(3), &train, Some(&test), &MarkerFactory, None),
            Err(EvalError::Gaf(_))
        ));
    }
}
