use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pointcount::dataset::{self, GenerateOptions, SplitName, Summary};
use pointcount::manifest::{read_jsonl, write_jsonl, ManifestRecord};
use pointcount::real_io::{adapt_real, AdaptOptions};
use pointcount::report::report;
use pointcount::run::{evaluate, RunConfig};
use pointcount::source::{noise_from_toml, parse_noise, EndpointConfig, ModelSpec, RetryPolicy, DEFAULT_TOKEN_ENV};
use pointcount_core::metrics::DEFAULT_TAU;
use pointcount_core::Approach;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "pointcount", version, about = "Pointing-based counting benchmark tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build synthetic splits and render their images.
    Generate {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// base, id, ood, noisy_tr or noisy_ts; repeatable. Defaults to all.
        #[arg(long = "split")]
        splits: Vec<SplitName>,
        /// Noisy_TS distractor counts to write (1-9); repeatable. Defaults to all.
        #[arg(long = "segment")]
        segments: Vec<u8>,
        /// Write manifests only.
        #[arg(long)]
        no_images: bool,
    },
    /// Write fine-tuning records (dc, ptc or xft targets) for a manifest.
    ExportFt {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        mode: String,
        /// Keep only records of this split tag (e.g. base_train).
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a model over a manifest and score the responses.
    Evaluate(EvalArgs),
    /// Write X-FT exports, prefill sets and activation-patching pairs.
    Ablate {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_images: bool,
    },
    /// Convert a mask-annotated photo collection into point manifests.
    AdaptReal {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        id: Option<usize>,
        #[arg(long)]
        ood: Option<usize>,
    },
    /// Summarize finished runs into CSV tables and SVG cell maps.
    Report {
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Every field can also come from `--config <file.toml>`; flags win.
#[derive(Args, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Manifest to evaluate.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Dataset root, used with --split.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Manifest name under --data, e.g. id, ood or noisy_ts_d9.
    #[arg(long)]
    split: Option<String>,
    /// oracle, noisy, pixel, tuple-stub, endpoint or offline.
    #[arg(long)]
    model: Option<String>,
    /// e.g. omit=0.2,hallucinate=0,jitter=0,answer=consistent
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    noise_config: Option<PathBuf>,
    #[arg(long)]
    url: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Offline responses, JSONL with {id, response_text}.
    #[arg(long)]
    responses: Option<PathBuf>,
    /// dc, ptc, coordcount, ltc or reasoning.
    #[arg(long)]
    approach: Option<String>,
    #[arg(long)]
    #[serde(default)]
    finetuned: bool,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    limit: Option<usize>,
}

macro_rules! fill {
    ($dst:ident, $src:ident: $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl EvalArgs {
    fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let file: EvalArgs = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        fill!(self, file: manifest, data, split, model, noise, noise_config, url, model_name, token_env, timeout_secs,
            responses, approach, max_tokens, concurrency, retries, out, seed, tau, limit);
        self.finetuned |= file.finetuned;
        Ok(self)
    }

    fn manifest(&self) -> Result<PathBuf> {
        match (&self.manifest, &self.data, &self.split) {
            (Some(m), _, _) => Ok(m.clone()),
            (None, Some(d), Some(s)) => Ok(d.join(format!("{s}.jsonl"))),
            (None, None, Some(s)) => Ok(Path::new("data").join(format!("{s}.jsonl"))),
            _ => bail!("pass --manifest, or --split (with optional --data)"),
        }
    }

    fn model(&self) -> Result<ModelSpec> {
        let name = self.model.as_deref().unwrap_or("oracle");
        Ok(match name {
            "noisy" => {
                let mut cfg = match &self.noise_config {
                    Some(p) => noise_from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                    None => Default::default(),
                };
                if let Some(s) = &self.noise {
                    cfg = parse_noise(s)?;
                }
                ModelSpec::Noisy(cfg)
            }
            "endpoint" => {
                let url = self.url.clone().context("--model endpoint needs --url")?;
                let model = self.model_name.clone().context("--model endpoint needs --model-name")?;
                let mut cfg = EndpointConfig::new(url, model);
                cfg.token_env = Some(self.token_env.clone().unwrap_or_else(|| DEFAULT_TOKEN_ENV.into()));
                if let Some(t) = self.timeout_secs {
                    cfg.timeout_secs = t;
                }
                if let Some(n) = self.retries {
                    cfg.retry = RetryPolicy { max_attempts: n + 1, ..RetryPolicy::default() };
                }
                ModelSpec::Endpoint(cfg)
            }
            "offline" => ModelSpec::Offline(self.responses.clone().context("--model offline needs --responses")?),
            other => other.parse()?,
        })
    }

    fn run_config(self) -> Result<RunConfig> {
        let args = self.merged()?;
        let manifest = args.manifest()?;
        let approach: Approach = args.approach.as_deref().unwrap_or("ptc").parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        let model = args.model()?;
        let out = args.out.clone().unwrap_or_else(|| {
            let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("split");
            PathBuf::from("runs").join(format!("{}_{stem}_{}", model.name().replace(':', "-"), approach.name()))
        });
        let mut cfg = RunConfig::new(&manifest, model, approach, out);
        if let Some(d) = &args.data {
            cfg.root = d.clone();
        }
        cfg.finetuned = args.finetuned;
        cfg.max_tokens = args.max_tokens;
        cfg.concurrency = args.concurrency.unwrap_or(1);
        cfg.seed = args.seed.unwrap_or(0);
        cfg.tau = args.tau.unwrap_or(DEFAULT_TAU);
        cfg.limit = args.limit;
        Ok(cfg)
    }
}

fn print_summary(s: &Summary) {
    for (k, v) in s {
        println!("{k:<16} {v}");
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", x * 100.0)).unwrap_or_else(|| "-".into())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Generate { out, seed, splits, segments, no_images } => {
            let mut opts = GenerateOptions::new(out, seed);
            if !splits.is_empty() {
                opts.splits = splits;
            }
            if !segments.is_empty() {
                opts.segments = segments;
            }
            opts.images = !no_images;
            print_summary(&dataset::generate(&opts)?);
        }
        Cmd::ExportFt { manifest, mode, tag, out } => {
            let mut records: Vec<ManifestRecord> = read_jsonl(&manifest)?;
            if let Some(t) = tag {
                records.retain(|r| r.split == t);
            }
            let n = write_jsonl(&out, &dataset::export_ft(&records, &mode)?)?;
            println!("{n} records -> {}", out.display());
        }
        Cmd::Evaluate(args) => {
            let cfg = args.run_config()?;
            let outcome = evaluate(&cfg)?;
            let r = &outcome.report;
            println!("run        {}", cfg.out.display());
            println!("samples    {} ({} new, {} resumed, {} errors)", r.samples, outcome.requested, outcome.resumed, outcome.errors);
            println!("accuracy   {:.2}", r.accuracy * 100.0);
            println!("f1         {}", pct(r.f1));
            println!("precision  {}", pct(r.precision));
            println!("recall     {}", pct(r.recall));
            println!("exact      {}", pct(r.exact_match));
            println!("consistent {}", pct(r.consistency));
        }
        Cmd::Ablate { out, seed, no_images } => print_summary(&dataset::ablate(&out, seed, !no_images)?),
        Cmd::AdaptReal { input, out, seed, train, val, id, ood } => {
            let mut opts = AdaptOptions::new(input, out, seed);
            let p = &mut opts.policy;
            p.train = train.unwrap_or(p.train);
            p.val = val.unwrap_or(p.val);
            p.id_test = id.unwrap_or(p.id_test);
            p.ood_test = ood.unwrap_or(p.ood_test);
            print_summary(&adapt_real(&opts)?);
        }
        Cmd::Report { out, runs } => {
            let s = report(&runs, &out)?;
            println!("{} runs -> {}", s.rows, out.join("summary.csv").display());
            for h in s.heatmaps {
                println!("heatmap    {}", h.display());
            }
        }
    }
    Ok(())
}
