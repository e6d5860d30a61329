use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::ArgMatches;
use spantagger::config::KEYS;
use spantagger::corpus::{parse_corpus, read_corpus};
use spantagger::eval::predict_text;
use spantagger::io::{read_to_string, write_atomic};
use spantagger::training::gradcheck::{toy_config, GRAD_TOL};
use spantagger::training::train_with;
use spantagger::{
    evaluate, grad_check, load_checkpoint, save_checkpoint, Error, Sentence, Sidecar, Task, TrainConfig,
    Variant,
};

pub const SEED_ENV: &str = "SPANTAGGER_SEED";

const GRADCHECK_SENTENCE: &str = "# id = gradcheck\n\
the\tDT\t2\tdet\tO\tO\n\
screen\tNN\t4\tnsubj\tS-POS\tO\n\
is\tVBZ\t4\tcop\tO\tO\n\
bright\tJJ\t0\troot\tO\tS\n\
!\t.\t4\tpunct\tO\tO\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

/// A failure reported as one `error: kind=... reason="..."` line on stderr.
#[derive(Debug)]
pub struct CliError {
    exit: Exit,
    kind: &'static str,
    fields: Vec<(&'static str, String)>,
    reason: String,
}

impl CliError {
    pub fn new(exit: Exit, kind: &'static str, reason: impl Into<String>) -> Self {
        CliError { exit, kind, fields: Vec::new(), reason: reason.into() }
    }

    fn with(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.fields.push((name, value.into()));
        self
    }

    pub fn line(&self) -> String {
        let mut s = format!("error: kind={}", self.kind);
        for (k, v) in &self.fields {
            s.push_str(&format!(" {k}={}", v.replace(char::is_whitespace, "_")));
        }
        s.push_str(&format!(" reason={:?}", self.reason));
        s
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("{}", self.line());
        ExitCode::from(self.exit as u8)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let reason = e.to_string();
        match e {
            Error::Config { key, message } => CliError::new(Exit::Usage, "config", message).with("key", key),
            Error::InvalidInput(_) => CliError::new(Exit::Usage, "invalid", reason),
            Error::Corpus(v) => {
                let first = v[0].clone();
                CliError::new(Exit::Data, "corpus", first.message)
                    .with("violations", v.len().to_string())
                    .with("sentence", first.sentence)
                    .with("line", first.line.to_string())
            }
            Error::Data(_) | Error::DegenerateNeighborhood => CliError::new(Exit::Data, "data", reason),
            Error::Checkpoint { field, message } => {
                CliError::new(Exit::Data, "checkpoint", message).with("field", field)
            }
            Error::Io { ref path, ref source } => {
                CliError::new(Exit::Data, "io", source.to_string()).with("path", path.display().to_string())
            }
            Error::Numeric(_) => CliError::new(Exit::Numeric, "numeric", reason),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn path(m: &ArgMatches, name: &str) -> Option<PathBuf> {
    m.get_one::<String>(name).map(PathBuf::from)
}

fn required(m: &ArgMatches, name: &str) -> PathBuf {
    path(m, name).expect("clap enforces required paths")
}

/// Fails before any work if an input file is missing.
fn check_inputs(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(CliError::new(Exit::Data, "io", "input file not found").with("path", p.display().to_string()));
        }
    }
    Ok(())
}

/// Defaults, then the seed environment variable, then the config file, then
/// flags.
fn build_config(m: &ArgMatches, base: TrainConfig) -> Result<TrainConfig> {
    let mut config = base;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        config.set("seed", &seed).map_err(|e| CliError::from(e).with("source", SEED_ENV))?;
    }
    if let Some(p) = path(m, "config") {
        check_inputs(&[&p])?;
        config.apply_text(&read_to_string(&p)?)?;
    }
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            config.set(key, v)?;
        }
    }
    Ok(config)
}

fn load_sidecar(m: &ArgMatches) -> Result<Option<Sidecar>> {
    match path(m, "sidecar") {
        Some(p) => {
            check_inputs(&[&p])?;
            Ok(Some(Sidecar::load(&p)?))
        }
        None => Ok(None),
    }
}

pub fn train(m: &ArgMatches) -> Result<()> {
    let train_path = required(m, "train");
    let dev_path = path(m, "dev");
    let out = required(m, "out");
    let metrics = path(m, "metrics").unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".metrics");
        PathBuf::from(p)
    });
    check_inputs(&[&train_path])?;
    if let Some(d) = &dev_path {
        check_inputs(&[d])?;
    }
    let config = build_config(m, TrainConfig::default())?;
    config.validate()?;
    let sidecar = load_sidecar(m)?;
    let train = read_corpus(&train_path, config.task)?;
    let dev = match &dev_path {
        Some(p) => read_corpus(p, config.task)?,
        None => Vec::new(),
    };
    let output = train_with(&config, &train, &dev, sidecar.as_ref(), |e| eprintln!("{e}"))?;
    save_checkpoint(&out, &output.model)?;
    write_atomic(&metrics, output.log_text().as_bytes())?;
    let best = &output.log[output.best_epoch - 1];
    println!(
        "best epoch={} devF1={:.6} checkpoint={} metrics={}",
        best.epoch,
        best.dev_f1,
        out.display(),
        metrics.display()
    );
    Ok(())
}

pub fn eval(m: &ArgMatches) -> Result<()> {
    let (model_path, data) = (required(m, "model"), required(m, "data"));
    check_inputs(&[&model_path, &data])?;
    let model = load_checkpoint(&model_path)?;
    let sidecar = load_sidecar(m)?;
    let corpus = read_corpus(&data, model.task())?;
    let report = evaluate(&model, &corpus, model.task(), sidecar.as_ref())?;
    print!("{report}");
    println!("{}", report.machine_line());
    Ok(())
}

pub fn predict(m: &ArgMatches) -> Result<()> {
    let (model_path, data, out) = (required(m, "model"), required(m, "data"), required(m, "out"));
    check_inputs(&[&model_path, &data])?;
    let model = load_checkpoint(&model_path)?;
    let sidecar = load_sidecar(m)?;
    let corpus = read_corpus(&data, model.task())?;
    write_atomic(&out, predict_text(&model, &corpus, sidecar.as_ref())?.as_bytes())?;
    println!("tagged {} sentences into {}", corpus.len(), out.display());
    Ok(())
}

fn gradcheck_sentence(m: &ArgMatches, task: Task) -> Result<Sentence> {
    let (text, origin) = match path(m, "data") {
        Some(p) => {
            check_inputs(&[&p])?;
            (read_to_string(&p)?, p.display().to_string())
        }
        None => (GRADCHECK_SENTENCE.to_string(), "built-in".to_string()),
    };
    let corpus = spantagger::corpus::parse_corpus_strict(&text, task)?;
    let found = match m.get_one::<String>("id") {
        Some(id) => corpus.into_iter().find(|s| &s.id == id),
        None => corpus.into_iter().next(),
    };
    found.ok_or_else(|| CliError::new(Exit::Data, "data", "no matching sentence").with("source", origin))
}

pub fn gradcheck(m: &ArgMatches) -> Result<()> {
    let config = build_config(m, toy_config(Variant::RgatBilstmCrf))?;
    config.validate()?;
    let sidecar = load_sidecar(m)?;
    let sentence = gradcheck_sentence(m, config.task)?;
    let r = grad_check(&config, &sentence, sidecar.as_ref())?;
    println!(
        "variant={} sentence={} max_rel_error={:.6e} worst={} checked={} kinks={}",
        config.variant.as_str(),
        sentence.id,
        r.max_rel_error,
        r.worst,
        r.checked,
        r.kinks
    );
    if r.max_rel_error < GRAD_TOL {
        Ok(())
    } else {
        Err(CliError::new(Exit::Numeric, "gradcheck", format!("max relative error {:.3e} at {}", r.max_rel_error, r.worst))
            .with("tolerance", format!("{GRAD_TOL:e}")))
    }
}

pub fn validate(m: &ArgMatches) -> Result<()> {
    let data = required(m, "data");
    check_inputs(&[&data])?;
    let task: Task = m.get_one::<String>("task").expect("has default").parse()?;
    let (sentences, violations) = parse_corpus(&read_to_string(&data)?, task);
    if violations.is_empty() {
        if !m.get_flag("quiet") {
            println!("ok: {} sentences", sentences.len());
        }
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Error::Corpus(violations).into())
}
