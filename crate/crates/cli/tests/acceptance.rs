//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;
use trend_cli::commands::{self, EvaluateOptions, EvaluateOutput, Overrides};
use trend_core::checkpoint::Checkpoint;
use trend_core::evaluation::EvaluationReport;
use trend_core::heads::{
    attention_weights, decode_span, fuse, relation_logits, TRIGGER_PATH_PREFIXES,
};
use trend_core::training::{cross_entropy_rows, scheduled_select, LossWeights, ScheduleConfig};
use trend_core::transfer::reinit_relation_head;
use trend_core::{Backbone, EncoderConfig, RelationOntology, TrendModel, TriggerSpan};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn ontology(name: &str) -> RelationOntology {
    RelationOntology::from_file(&repo().join("ontologies").join(format!("{name}.toml"))).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quote(p: &Path) -> String {
    format!("\"{}\"", p.display())
}

fn smoke_config(dir: &Path, out: &str) -> PathBuf {
    let r = repo();
    let fixture = r.join("fixtures/trigger_annotated.json");
    let text = format!(
        "[data]\nontology = {}\ntrain = {}\nmax_len = 128\n\n[model]\nbackbone = \"tiny\"\n\n\
         [training]\nlearning_rate = 5e-3\nepochs = 200\nbatch_size = 8\nseed = 42\n\n[output]\ndir = {}\n",
        quote(&r.join("ontologies/dialogre.toml")),
        quote(&fixture),
        quote(&dir.join(out)),
    );
    let p = dir.join(format!("{out}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

fn transfer_config(dir: &Path, out: &str) -> PathBuf {
    let r = repo();
    let text = format!(
        "[data]\nontology = {}\nadapter = {}\ntrain = {}\nmax_len = 128\n\n\
         [training]\nlearning_rate = 5e-3\nepochs = 200\nbatch_size = 8\nseed = 42\n\n\
         [transfer]\nfreeze_trigger_path = true\n\n[output]\ndir = {}\n",
        quote(&r.join("ontologies/ddrel.toml")),
        quote(&r.join("configs/adapters/ddrel_session.toml")),
        quote(&r.join("fixtures/trigger_free.jsonl")),
        quote(&dir.join(out)),
    );
    let p = dir.join(format!("{out}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

fn score(
    checkpoint: &Path,
    corpus: &Path,
    adapter: Option<PathBuf>,
    out: &Path,
) -> Result<EvaluationReport, String> {
    let opts = EvaluateOptions {
        adapter,
        batch_size: 32,
        ..EvaluateOptions::default()
    };
    match commands::evaluate_corpus(checkpoint, corpus, out, &opts).map_err(|e| e.to_string())? {
        EvaluateOutput::Report(r) => Ok(r),
        EvaluateOutput::Predictions(_) => Err("no report produced".into()),
    }
}

fn finest_accuracy(report: &EvaluationReport) -> f64 {
    report
        .granularities
        .iter()
        .max_by_key(|g| g.classes)
        .map_or(0.0, |g| g.accuracy)
}

fn overfit(tmp: &Path) -> Outcome {
    let cfg = smoke_config(tmp, "overfit");
    let t0 = Instant::now();
    let run = commands::train(&cfg, &Overrides::default()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let fixture = repo().join("fixtures/trigger_annotated.json");
    let report = score(&run.checkpoint, &fixture, None, &tmp.join("overfit_eval"))?;
    let acc = finest_accuracy(&report);
    let gate = report.gate_accuracy.unwrap_or(0.0);
    let em = report.trigger_em.unwrap_or(0.0);
    check(
        acc == 1.0 && gate == 1.0 && em >= 0.9 && secs < 120.0,
        format!("accuracy {acc:.4}, gate {gate:.4}, trigger EM {em:.4}, {secs:.1} s"),
    )
}

fn gradient_check() -> Outcome {
    const D: usize = 4;
    const K: usize = 3;
    const R: usize = 5;
    let loss = |ts: &[Tensor], y: u32| -> Tensor {
        let fused = fuse(&ts[0], &ts[1]).unwrap().unsqueeze(0).unwrap();
        let logits = relation_logits(&ts[2], &ts[3], &fused, &ts[0].unsqueeze(0).unwrap()).unwrap();
        cross_entropy_rows(&logits, &[y])
            .unwrap()
            .sum_all()
            .unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let vars: Vec<Var> = [vec![D], vec![K, D], vec![R, 2 * D], vec![R]]
            .iter()
            .map(|shape| {
                let n = shape.iter().product();
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                Var::from_tensor(&Tensor::from_vec(v, shape.as_slice(), &Device::Cpu).unwrap())
                    .unwrap()
            })
            .collect();
        let y = rng.random_range(0..R as u32);
        let base: Vec<Tensor> = vars.iter().map(|v| v.as_tensor().clone()).collect();
        let grads = loss(&base, y).backward().unwrap();
        for (vi, var) in vars.iter().enumerate() {
            let analytic: Vec<f64> = grads
                .get(var.as_tensor())
                .unwrap()
                .flatten_all()
                .unwrap()
                .to_vec1()
                .unwrap();
            let flat: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
            for (j, a) in analytic.iter().enumerate() {
                let shifted = |delta: f64| {
                    let mut v = flat.clone();
                    v[j] += delta;
                    let mut ts: Vec<Tensor> = base.iter().map(|t| t.detach()).collect();
                    ts[vi] = Tensor::from_vec(v, var.dims(), &Device::Cpu).unwrap();
                    loss(&ts, y).to_scalar::<f64>().unwrap()
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
    }
    check(
        worst < 1e-4,
        format!("worst relative error {worst:.2e} over 50 instances"),
    )
}

fn attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    let mut singletons = 0;
    for i in 0..1000 {
        let d = rng.random_range(2..=16);
        let k = if i % 5 == 0 {
            1
        } else {
            rng.random_range(1..=10)
        };
        singletons += usize::from(k == 1);
        let c: Vec<f32> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
        let x: Vec<f32> = (0..k * d).map(|_| rng.random_range(-4.0..4.0)).collect();
        let c = Tensor::from_vec(c, d, &Device::Cpu).unwrap();
        let x = Tensor::from_vec(x, (k, d), &Device::Cpu).unwrap();
        let w: Vec<f32> = attention_weights(&c, &x).unwrap().to_vec1().unwrap();
        negative += w.iter().filter(|v| **v < 0.0).count();
        let sum: f64 = w.iter().map(|v| f64::from(*v)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    check(
        worst <= 1e-6 && negative == 0,
        format!(
            "max |sum - 1| {worst:.2e}, {negative} negative weights, {singletons} singleton sets"
        ),
    )
}

fn brute_force_span(
    start: &[f32],
    end: &[f32],
    mask: &[bool],
    window: usize,
) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for s in (0..start.len()).filter(|&s| mask[s]) {
        for e in (s..end.len()).filter(|&e| mask[e] && e - s < window) {
            best = match best {
                Some((bs, be))
                    if start[s] < start[bs]
                        || (start[s] == start[bs]
                            && (s > bs || (s == bs && end[e] <= end[be]))) =>
                {
                    Some((bs, be))
                }
                _ => Some((s, e)),
            };
        }
    }
    best
}

fn span_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..40);
        let window = rng.random_range(1..=12);
        let start: Vec<f32> = (0..len).map(|_| rng.random_range(0..6) as f32).collect();
        let end: Vec<f32> = (0..len).map(|_| rng.random_range(0..6) as f32).collect();
        let mut mask: Vec<bool> = (0..len).map(|_| rng.random_bool(0.6)).collect();
        let forced = rng.random_range(0..len);
        mask[forced] = true;
        let got = decode_span(&start, &end, &mask, true, window).ok();
        let want =
            brute_force_span(&start, &end, &mask, window).map(|(s, e)| TriggerSpan::new(s, e));
        mismatches += usize::from(got != want);
    }
    check(
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 instances"),
    )
}

fn transfer_preservation() -> Outcome {
    let source_onto = ontology("dialogre");
    let target = ontology("ddrel");
    let model = TrendModel::random(
        EncoderConfig::tiny(120),
        Backbone::Tiny,
        source_onto.len(),
        10,
        0,
        3,
    )
    .map_err(|e| e.to_string())?;
    let moved = reinit_relation_head(&model, &target, 9).map_err(|e| e.to_string())?;
    let before = model.store.checksums().map_err(|e| e.to_string())?;
    let after = moved.store.checksums().map_err(|e| e.to_string())?;
    let kept = before
        .keys()
        .filter(|k| !k.starts_with("heads.relation."))
        .count();
    let changed = before
        .iter()
        .filter(|(k, v)| !k.starts_with("heads.relation.") && after.get(*k) != Some(v))
        .count();
    let dim = moved.num_relations;
    check(
        changed == 0 && dim == target.len() && before.len() == after.len(),
        format!(
            "{kept} tensors kept, {changed} changed, head {} -> {dim}",
            source_onto.len()
        ),
    )
}

fn loss_composition() -> Outcome {
    let w = LossWeights::default();
    let (lt, lr, lb) = (2.0, 1.0, 0.5);
    let total = w.combine(lt, lr, lb);
    let tensor = |v: f64| Tensor::new(v, &Device::Cpu).unwrap();
    let via_tensors = w
        .combine_tensors(Some(&tensor(lt)), Some(&tensor(lr)), Some(&tensor(lb)))
        .and_then(|t| Ok(t.to_scalar::<f64>()?))
        .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let base = LossWeights {
            w_trigger: rng.random_range(0.0..2.0),
            w_relation: rng.random_range(0.0..2.0),
            w_binary: rng.random_range(0.0..2.0),
        };
        let delta = rng.random_range(0.0..2.0);
        let at = base.combine(lt, lr, lb);
        let bumps = [
            (
                LossWeights {
                    w_trigger: base.w_trigger + delta,
                    ..base
                },
                lt,
            ),
            (
                LossWeights {
                    w_relation: base.w_relation + delta,
                    ..base
                },
                lr,
            ),
            (
                LossWeights {
                    w_binary: base.w_binary + delta,
                    ..base
                },
                lb,
            ),
        ];
        for (bumped, component) in bumps {
            let err = (bumped.combine(lt, lr, lb) - at - delta * component).abs();
            worst = worst.max(err / at.abs().max(1.0));
        }
    }
    check(
        total == 2.1 && via_tensors == 2.1 && worst <= 4.0 * f64::EPSILON,
        format!("combined {total}, tensor path {via_tensors}, linearity error {worst:.1e}"),
    )
}

fn scheduled_sampling() -> Outcome {
    let schedule = ScheduleConfig {
        tf_trigger: 0.7,
        tf_gate: 0.7,
    };
    let gold = TriggerSpan::new(3, 4);
    let predicted = TriggerSpan::new(7, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let gold_spans = (0..10_000)
        .filter(|_| scheduled_select(gold, predicted, true, true, &schedule, &mut rng).span == gold)
        .count();
    check(
        (6850..=7150).contains(&gold_spans),
        format!("{gold_spans} gold-span selections in 10000 draws"),
    )
}

fn metric_oracle() -> Outcome {
    let o = ontology("ddrel");
    let mut inexact = 0;
    let mut non_monotone = 0;
    for seed in 1000..1100 {
        let r = oracle::run_case(seed, &o);
        inexact += usize::from(!r.exact);
        non_monotone += usize::from(!r.monotone);
    }
    check(
        inexact == 0 && non_monotone == 0,
        format!("{inexact} inexact, {non_monotone} non-monotone in 100 cases"),
    )
}

fn determinism(tmp: &Path) -> Outcome {
    let logs: Vec<Vec<u8>> = ["det_a", "det_b"]
        .iter()
        .map(|name| {
            let cfg = smoke_config(tmp, name);
            let run = commands::train(&cfg, &Overrides::default()).map_err(|e| e.to_string())?;
            std::fs::read(run.dir.join(commands::METRICS_FILE)).map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()?;
    check(
        logs[0] == logs[1] && !logs[0].is_empty(),
        format!(
            "metric logs of {} bytes, identical: {}",
            logs[0].len(),
            logs[0] == logs[1]
        ),
    )
}

fn transfer_overfit(tmp: &Path) -> Outcome {
    let source = tmp.join("overfit").join(commands::CHECKPOINT_DIR);
    let source_ckpt = Checkpoint::load(&source).map_err(|e| e.to_string())?;
    let cfg = transfer_config(tmp, "transfer");
    let run =
        commands::transfer(&source, &cfg, &Overrides::default()).map_err(|e| e.to_string())?;
    let adapter = repo().join("configs/adapters/ddrel_session.toml");
    let fixture = repo().join("fixtures/trigger_free.jsonl");
    let report = score(
        &run.checkpoint,
        &fixture,
        Some(adapter),
        &tmp.join("transfer_eval"),
    )?;
    let acc = finest_accuracy(&report);
    let target = Checkpoint::load(&run.checkpoint).map_err(|e| e.to_string())?;
    let before = source_ckpt
        .model
        .store
        .checksums()
        .map_err(|e| e.to_string())?;
    let after = target.model.store.checksums().map_err(|e| e.to_string())?;
    let trigger_path: Vec<&String> = before
        .keys()
        .filter(|k| TRIGGER_PATH_PREFIXES.iter().any(|p| k.starts_with(p)))
        .collect();
    let changed = trigger_path
        .iter()
        .filter(|k| before.get(**k) != after.get(**k))
        .count();
    check(
        acc == 1.0 && changed == 0 && !trigger_path.is_empty(),
        format!(
            "target accuracy {acc:.4}, {changed} of {} gate/span tensors changed",
            trigger_path.len()
        ),
    )
}

fn main() {
    let tmp = TempDir::new().expect("temporary directory");
    let dir = tmp.path();
    let criteria: Vec<Criterion> = vec![
        (
            "overfit on the annotated fixture",
            Box::new(|| overfit(dir)),
        ),
        ("gradient check", Box::new(gradient_check)),
        ("attention normalization", Box::new(attention_normalization)),
        ("span decoder oracle", Box::new(span_oracle)),
        ("transfer preservation", Box::new(transfer_preservation)),
        ("loss composition", Box::new(loss_composition)),
        (
            "scheduled sampling statistics",
            Box::new(scheduled_sampling),
        ),
        ("metric oracle", Box::new(metric_oracle)),
        ("training determinism", Box::new(|| determinism(dir))),
        (
            "transfer fine-tune overfit",
            Box::new(|| transfer_overfit(dir)),
        ),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
