mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use synergy_tensor::classification::{confusion, confusion_csv};
use synergy_tensor::data::{generate, load_csv, save_csv, ClassContrast, Dataset};
use synergy_tensor::experiment::{
    run_nmf_pipeline, run_selected, run_tucker_pipeline, split_dof, ExperimentConfig, Method,
};
use synergy_tensor::io::{load_ntf1, save_ntf1, write_atomic};
use synergy_tensor::tensor::Matrix;
use synergy_tensor::tfa::{tensorise_epochs, Dof, EmgEpoch};
use synergy_tensor::tucker::{ntd_multistart, TuckerRanks};

use config::{CliConfig, CONFIG_ENV};

type CliResult<T> = Result<T, String>;

const AFTER_HELP: &str = "\
Settings come from defaults, then the JSON file named by SYNERGY_TENSOR_CONFIG
(keys: synth, experiment, data, out; unknown keys are rejected), then flags.

Randomness: --seed is the single master seed. Synthetic subject s, movement m,
repetition j draws from derive_seed(seed, [s, m, j]). For subject s and DoF d
the train/test split uses derive_seed(seed, [s, d, 0]), the Tucker fit
[s, d, 1] and NMF [s, d, 2]. derive_seed is a SplitMix64 chain.";

#[derive(Parser)]
#[command(
    name = "synergy-tensor",
    version,
    about = "Spectro-temporal muscle synergies from EMG envelopes with non-negative Tucker decomposition",
    after_help = AFTER_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic EMG-envelope dataset with planted synergies
    #[command(after_help = AFTER_HELP)]
    Synth(SynthArgs),
    /// Turn a dataset into per-DoF 4th-order NTF1 tensors with label sidecars
    #[command(after_help = AFTER_HELP)]
    Tensorize(TensorizeArgs),
    /// Fit a non-negative Tucker model to an NTF1 tensor
    #[command(after_help = AFTER_HELP)]
    Decompose(DecomposeArgs),
    /// Classify test repetitions with one method and report predictions
    #[command(after_help = AFTER_HELP)]
    Classify(ClassifyArgs),
    /// Compare Tucker3 and NMF features across subjects and DoFs
    #[command(after_help = AFTER_HELP)]
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WaveletFlags {
    /// Number of log-spaced wavelet frequency bins [default: 282]
    #[arg(long)]
    bins: Option<usize>,
    /// Lowest centre frequency in Hz [default: 0.5]
    #[arg(long)]
    f_min: Option<f64>,
    /// Highest centre frequency in Hz [default: 50]
    #[arg(long)]
    f_max: Option<f64>,
}

#[derive(Args)]
struct FitFlags {
    /// Tucker ranks per mode, comma separated [default: 2,2,2,2]
    #[arg(long)]
    ranks: Option<TuckerRanks>,
    /// Maximum sweeps or iterations per fit [default: 500]
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Stop when the relative objective decrease falls below this [default: 1e-6]
    #[arg(long)]
    tolerance: Option<f64>,
    /// Tucker fits per tensor, the first from a spectral start and the rest random; best kept [default: 1]
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Args)]
struct SplitFlags {
    /// Fraction of each movement's repetitions used for training [default: 0.6]
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args)]
struct Selection {
    /// Only this subject [default: all]
    #[arg(long)]
    subject: Option<u32>,
    /// Only this DoF, 1 to 3 [default: all]
    #[arg(long)]
    dof: Option<u8>,
}

#[derive(Args)]
struct DataArg {
    /// Dataset directory with subject_<id>/dof<k>_<direction>_rep<j>.csv files
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of subjects [default: 1]
    #[arg(long)]
    subjects: Option<usize>,
    /// EMG channels [default: 10]
    #[arg(long)]
    channels: Option<usize>,
    /// Sample rate in Hz [default: 100]
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Epoch length in seconds [default: 5]
    #[arg(long)]
    seconds: Option<f64>,
    /// Repetitions per movement [default: 10]
    #[arg(long)]
    reps: Option<usize>,
    /// Half-normal noise level relative to peak amplitude [default: 0.05]
    #[arg(long)]
    noise: Option<f64>,
    /// Class contrast between the two movements of a DoF [default: full]
    #[arg(long, value_enum)]
    contrast: Option<ContrastArg>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContrastArg {
    Full,
    SpectralOnly,
    None,
}

impl From<ContrastArg> for ClassContrast {
    fn from(c: ContrastArg) -> Self {
        match c {
            ContrastArg::Full => ClassContrast::Full,
            ContrastArg::SpectralOnly => ClassContrast::SpectralOnly,
            ContrastArg::None => ClassContrast::None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn as_str(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
            SplitArg::All => "all",
        }
    }
}

#[derive(Args)]
struct TensorizeArgs {
    #[command(flatten)]
    data: DataArg,
    /// Output directory for subject<id>_dof<k>_<split>.ntf1 and .labels.txt
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which repetitions to tensorise [default: train]
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    #[command(flatten)]
    selection: Selection,
    #[command(flatten)]
    wavelet: WaveletFlags,
    #[command(flatten)]
    split_flags: SplitFlags,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct DecomposeArgs {
    /// NTF1 tensor to decompose
    #[arg(long)]
    input: PathBuf,
    /// Model directory (core.ntf1, factor_<k>.ntf1, metadata.txt, factor_<k>.csv)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitFlags,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Tucker,
    Nmf,
    Both,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Tucker => vec![Method::Tucker3],
            MethodArg::Nmf => vec![Method::Nmf],
            MethodArg::Both => Method::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct ExperimentFlags {
    #[command(flatten)]
    wavelet: WaveletFlags,
    #[command(flatten)]
    fit: FitFlags,
    #[command(flatten)]
    split: SplitFlags,
    /// Neighbours in the k-NN vote [default: 3]
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    data: DataArg,
    /// Directory for predictions.csv and confusion.csv
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feature extraction method [default: tucker]
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[command(flatten)]
    selection: Selection,
    #[command(flatten)]
    experiment: ExperimentFlags,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArg,
    /// Directory for report.csv, summary.txt and metadata.txt
    #[arg(long)]
    out: Option<PathBuf>,
    /// Methods to run [default: both]
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[command(flatten)]
    selection: Selection,
    #[command(flatten)]
    experiment: ExperimentFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = CliConfig::from_env().map_err(|e| format!("{CONFIG_ENV}: {e}"))?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Tensorize(a) => cmd_tensorize(&cfg, a),
        Command::Decompose(a) => cmd_decompose(&cfg, a),
        Command::Classify(a) => cmd_classify(&cfg, a),
        Command::Benchmark(a) => cmd_benchmark(&cfg, a),
    }
}

fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}

fn required_dir(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| format!("no {what} directory given (flag or config file)"))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes()).map_err(|e| e.to_string())
}

fn apply_wavelet(cfg: &mut ExperimentConfig, w: WaveletFlags) {
    set(&mut cfg.wavelet.n_bins, w.bins);
    set(&mut cfg.wavelet.f_min, w.f_min);
    set(&mut cfg.wavelet.f_max, w.f_max);
}

fn apply_fit(cfg: &mut ExperimentConfig, f: FitFlags) {
    set(&mut cfg.ranks, f.ranks);
    set(&mut cfg.fit.max_iterations, f.max_iterations);
    set(&mut cfg.fit.tolerance, f.tolerance);
    set(&mut cfg.tucker_starts, f.starts);
}

fn experiment_config(file: &CliConfig, flags: ExperimentFlags) -> CliResult<ExperimentConfig> {
    let mut cfg = file.experiment.clone();
    apply_wavelet(&mut cfg, flags.wavelet);
    apply_fit(&mut cfg, flags.fit);
    set(&mut cfg.split.train_fraction, flags.split.train_fraction);
    set(&mut cfg.k, flags.k);
    set(&mut cfg.seed, flags.seed.seed);
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn load_dataset(flag: Option<PathBuf>, file: &CliConfig) -> CliResult<Dataset> {
    let dir = required_dir(flag, &file.data, "dataset")?;
    if !dir.is_dir() {
        return Err(format!("{}: dataset directory not found", dir.display()));
    }
    load_csv(&dir).map_err(|e| e.to_string())
}

fn selected(dataset: &Dataset, sel: &Selection) -> CliResult<(Vec<u32>, Vec<Dof>)> {
    let subjects = match sel.subject {
        Some(s) if dataset.subjects().contains(&s) => vec![s],
        Some(s) => return Err(format!("subject {s} not in dataset")),
        None => dataset.subjects(),
    };
    let dofs = match sel.dof {
        Some(d) => vec![Dof::new(d).map_err(|e| e.to_string())?],
        None => Dof::ALL.to_vec(),
    };
    Ok((subjects, dofs))
}

fn cmd_synth(file: &CliConfig, a: SynthArgs) -> CliResult<()> {
    let mut spec = file.synth.clone();
    set(&mut spec.subjects, a.subjects);
    set(&mut spec.channels, a.channels);
    set(&mut spec.sample_rate, a.sample_rate);
    set(&mut spec.epoch_seconds, a.seconds);
    set(&mut spec.repetitions_per_movement, a.reps);
    set(&mut spec.noise_level, a.noise);
    set(&mut spec.contrast, a.contrast.map(Into::into));
    set(&mut spec.seed, a.seed.seed);
    let out = required_dir(a.out, &file.out, "output")?;

    let dataset = generate(&spec).map_err(|e| e.to_string())?;
    create_dir(&out)?;
    save_csv(&dataset, &out).map_err(|e| e.to_string())?;
    let manifest = serde_json::to_string_pretty(&spec).expect("spec serialises");
    write_file(&out.join("manifest.json"), &(manifest + "\n"))?;

    println!("dataset: {}", out.display());
    println!("subjects: {}", spec.subjects);
    println!("movements: {}", spec.patterns().len());
    println!(
        "repetitions per movement: {}",
        spec.repetitions_per_movement
    );
    println!("channels: {}", spec.channels);
    println!(
        "samples per epoch: {} at {} Hz",
        spec.samples(),
        spec.sample_rate
    );
    println!(
        "contrast: {:?}, noise level: {}",
        spec.contrast, spec.noise_level
    );
    println!("seed: {}", spec.seed);
    println!("epoch files: {}", dataset.epochs.len());
    Ok(())
}

fn cmd_tensorize(file: &CliConfig, a: TensorizeArgs) -> CliResult<()> {
    let mut cfg = file.experiment.clone();
    apply_wavelet(&mut cfg, a.wavelet);
    set(&mut cfg.split.train_fraction, a.split_flags.train_fraction);
    set(&mut cfg.seed, a.seed.seed);
    let which = a.split.unwrap_or(SplitArg::Train);
    let out = required_dir(a.out, &file.out, "output")?;
    let dataset = load_dataset(a.data.data, file)?;
    let (subjects, dofs) = selected(&dataset, &a.selection)?;
    create_dir(&out)?;

    for &subject in &subjects {
        for &dof in &dofs {
            let epochs: Vec<&EmgEpoch> = match which {
                SplitArg::All => dataset
                    .epochs
                    .iter()
                    .filter(|e| e.subject == subject && e.label.dof == dof)
                    .collect(),
                _ => {
                    let s = split_dof(&dataset, subject, dof, &cfg).map_err(|e| e.to_string())?;
                    if which == SplitArg::Train {
                        s.train
                    } else {
                        s.test
                    }
                }
            };
            if epochs.is_empty() {
                return Err(format!("subject {subject} DoF {dof}: no epochs"));
            }
            let t = tensorise_epochs(&epochs, &cfg.wavelet).map_err(|e| e.to_string())?;
            let stem = format!("subject{subject}_dof{dof}_{}", which.as_str());
            save_ntf1(&t.tensor, &out.join(format!("{stem}.ntf1"))).map_err(|e| e.to_string())?;
            write_file(&out.join(format!("{stem}.labels.txt")), &t.labels_text())?;
            println!("{stem}.ntf1 shape {:?}", t.tensor.shape());
        }
    }
    Ok(())
}

fn cmd_decompose(file: &CliConfig, a: DecomposeArgs) -> CliResult<()> {
    let mut cfg = file.experiment.clone();
    apply_fit(&mut cfg, a.fit);
    set(&mut cfg.seed, a.seed.seed);
    cfg.fit.validate().map_err(|e| e.to_string())?;
    let out = required_dir(a.out, &file.out, "output")?;

    let x = load_ntf1(&a.input).map_err(|e| e.to_string())?;
    cfg.ranks
        .validate_for(x.shape())
        .map_err(|e| format!("{}: {e}", a.input.display()))?;
    let model = ntd_multistart(
        &x,
        &cfg.ranks,
        &cfg.fit.with_seed(cfg.seed),
        cfg.tucker_starts.max(1),
    )
    .map_err(|e| e.to_string())?;
    model.save(&out).map_err(|e| e.to_string())?;
    for (k, f) in model.factors.iter().enumerate() {
        write_file(&out.join(format!("factor_{k}.csv")), &factor_csv(f))?;
    }
    println!("shape: {:?}", x.shape());
    println!("ranks: {}", cfg.ranks);
    println!("iterations: {}", model.iterations);
    println!("final error: {:.6}", model.final_error);
    println!("explained variance: {:.6}", model.explained_variance);
    println!("model: {}", out.display());
    Ok(())
}

fn factor_csv(f: &Matrix) -> String {
    let header: Vec<String> = (1..=f.cols()).map(|j| format!("component{j}")).collect();
    f.to_csv(Some(&header))
}

fn cmd_classify(file: &CliConfig, a: ClassifyArgs) -> CliResult<()> {
    let cfg = experiment_config(file, a.experiment)?;
    let method = match a.method.unwrap_or(MethodArg::Tucker) {
        MethodArg::Both => return Err("classify takes a single method (tucker or nmf)".into()),
        m => m.methods()[0],
    };
    let out = a.out.or_else(|| file.out.clone());
    let dataset = load_dataset(a.data.data, file)?;
    let (subjects, dofs) = selected(&dataset, &a.selection)?;

    let mut rows = String::from("subject,dof,method,repetition,truth,predicted\n");
    let (mut truth, mut predicted) = (Vec::new(), Vec::new());
    for &subject in &subjects {
        for &dof in &dofs {
            let r = match method {
                Method::Tucker3 => run_tucker_pipeline(&dataset, subject, dof, &cfg),
                Method::Nmf => run_nmf_pipeline(&dataset, subject, dof, &cfg),
            }
            .map_err(|e| format!("subject {subject} DoF {dof}: {e}"))?;
            for ((rep, t), p) in r.repetitions.iter().zip(&r.truth).zip(&r.predicted) {
                rows.push_str(&format!(
                    "{subject},{dof},{},{rep},{t},{p}\n",
                    method.as_str()
                ));
            }
            println!(
                "subject {subject} DoF {dof} {}: error rate {:.4}",
                method.as_str(),
                r.error_rate
            );
            truth.extend(r.truth);
            predicted.extend(r.predicted);
        }
    }
    if let Some(out) = out {
        create_dir(&out)?;
        write_file(&out.join("predictions.csv"), &rows)?;
        let c = confusion(&predicted, &truth).map_err(|e| e.to_string())?;
        write_file(&out.join("confusion.csv"), &confusion_csv(&c))?;
    }
    Ok(())
}

fn cmd_benchmark(file: &CliConfig, a: BenchmarkArgs) -> CliResult<()> {
    let cfg = experiment_config(file, a.experiment)?;
    let methods = a.method.unwrap_or(MethodArg::Both).methods();
    let out = required_dir(a.out, &file.out, "output")?;
    let mut dataset = load_dataset(a.data.data, file)?;
    let (subjects, dofs) = selected(&dataset, &a.selection)?;
    dataset.epochs.retain(|e| subjects.contains(&e.subject));

    let report = run_selected(&dataset, &cfg, &methods, &dofs).map_err(|e| e.to_string())?;
    create_dir(&out)?;
    write_file(&out.join("report.csv"), &report.to_csv())?;
    let table = report.summary_table();
    write_file(&out.join("summary.txt"), &table)?;
    write_file(&out.join("metadata.txt"), &report.metadata())?;
    print!("{table}");
    Ok(())
}
