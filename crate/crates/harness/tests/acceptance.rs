//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Set `POINTCOUNT_ACCEPT_FULL=1` to also render every Noisy_TS
//! image in the determinism check, and `POINTCOUNT_ACCEPT_ONLY=3,4` to run a
//! subset (skipped criteria print SKIP, never PASS).

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pointcount::dataset::{self, manifest_path, noisy_ts_manifest_path, GenerateOptions, SplitName};
use pointcount::image_io::{write_label_png, write_png};
use pointcount::manifest::{read_jsonl, ManifestRecord};
use pointcount::real_io::{adapt_real, AdaptOptions};
use pointcount::run::{evaluate, export_responses, RunConfig, RunRecord, RECORDS_FILE};
use pointcount::source::{parse_noise, ModelSpec};
use pointcount_core::ablation::build_patch_pairs;
use pointcount_core::builder::{self, label_histogram, SplitSpec, NOISY_TEST_SEGMENTS};
use pointcount_core::metrics::{match_continuous, MetricReport};
use pointcount_core::parse::CoordPair;
use pointcount_core::real::{augment, mask_to_pixel, mask_to_point, AugmentConfig, AugmentOp, Mask, NormPoint};
use pointcount_core::{seed, Approach, GridDims, ObjectSpec, ParsedResponse, RgbImage, Sample, Split};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Deserialize;
use sha2::{Digest, Sha256};

const SEED: u64 = 20_240_601;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn uniform(h: &BTreeMap<u16, usize>) -> bool {
    let mut v = h.values();
    let first = v.next();
    first.is_some() && h.values().all(|n| Some(n) == first)
}

/// Every count-1 sample of each object, taken together, covers each cell once.
fn covers_cells_once(samples: &[Sample], dims: GridDims) -> Result<(), String> {
    let mut per_obj: BTreeMap<ObjectSpec, Vec<(u8, u8)>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.label == 1) {
        per_obj.entry(s.object).or_default().push((s.coords[0].row, s.coords[0].col));
    }
    ensure(!per_obj.is_empty(), "no count-1 samples")?;
    for (obj, mut cells) in per_obj {
        cells.sort();
        let all: Vec<(u8, u8)> = (0..dims.rows).flat_map(|r| (0..dims.cols).map(move |c| (r, c))).collect();
        ensure(cells == all, format!("{obj:?}: count-1 cells do not cover the grid exactly once"))?;
    }
    Ok(())
}

fn disjoint_chains(samples: &[Sample], train: Split, val: Split) -> Result<(), String> {
    let ids = |split: Split| samples.iter().filter(|s| s.split == split).map(|s| (s.object, s.chain_id)).collect::<BTreeSet<_>>();
    let (t, v) = (ids(train), ids(val));
    ensure(!t.is_empty() && !v.is_empty(), "empty train or val")?;
    ensure(t.is_disjoint(&v), format!("{} and {} share chain ids", train.tag(), val.tag()))?;
    let chain_t: BTreeSet<u16> = t.iter().map(|(_, c)| *c).collect();
    let chain_v: BTreeSet<u16> = v.iter().map(|(_, c)| *c).collect();
    ensure(chain_t.is_disjoint(&chain_v), "chain id ranges overlap")
}

/// Criteria 1 and 2 share one build of every split.
fn cardinality_and_balance() -> (Check, Check) {
    let start = Instant::now();
    let dims = GridDims::default();
    let mut bal: Vec<String> = Vec::new();
    let mut err1 = Vec::new();
    let mut counts: Vec<(&str, usize, usize)> = Vec::new();
    let mut push = |name, got, want| counts.push((name, got, want));

    let (train, val) = builder::build_base(SEED, dims).expect("base");
    push("base_train", train.len(), 4_860);
    push("base_val", val.len(), 2_430);
    let base: Vec<Sample> = train.into_iter().chain(val).collect();
    push("base", base.len(), 7_290);
    let id = builder::build_id_test(SEED, dims).expect("id");
    push("id", id.len(), 17_496);
    let ood = builder::build_ood_test(SEED, dims).expect("ood");
    push("ood", ood.len(), 17_496);
    let ood_labels: BTreeSet<u16> = ood.iter().map(|s| s.label).collect();
    if ood_labels != (10..=18).collect() {
        err1.push(format!("ood labels {ood_labels:?}"));
    }
    let noisy_tr = builder::build_noisy_train(&base, SEED).expect("noisy_tr");
    push("noisy_tr", noisy_tr.len(), 7_290);
    let mut d_hist: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &noisy_tr {
        *d_hist.entry(s.distractors.count()).or_default() += 1;
    }
    let d_counts: Vec<usize> = d_hist.values().copied().collect();
    if d_counts != [2_430, 2_430, 2_430] {
        err1.push(format!("noisy_tr d-histogram {d_hist:?}"));
    }

    let mut total = 0;
    let mut seg_bad = Vec::new();
    for d in NOISY_TEST_SEGMENTS {
        let seg = builder::build_noisy_test_segment(&id, d, SEED).expect("noisy_ts");
        total += seg.len();
        if seg.len() != 50_301 {
            err1.push(format!("noisy_ts d{d}: {}", seg.len()));
        }
        if !uniform(&label_histogram(&seg)) {
            seg_bad.push(d);
        }
        if seg.iter().any(|s| s.distractors.count() != usize::from(d)) {
            err1.push(format!("noisy_ts d{d}: wrong distractor count"));
        }
    }
    push("noisy_ts", total, SplitSpec::NOISY_TEST_TOTAL);
    push("noisy_ts_total", total, 452_709);
    let pairs = build_patch_pairs(&id, SEED);
    push("patch_pairs", pairs.len(), 5_184);
    let secs = start.elapsed().as_secs_f64();
    let card: Vec<String> = counts.iter().map(|(n, g, _)| format!("{n}={g}")).collect();
    err1.extend(counts.iter().filter(|(_, g, w)| g != w).map(|(n, g, w)| format!("{n}: {g} != {w}")));
    if secs >= 300.0 {
        err1.push(format!("took {secs:.0} s"));
    }
    let c1 = if err1.is_empty() { Ok(format!("{} in {secs:.1} s", card.join(" "))) } else { Err(err1.join("; ")) };

    let c2 = (|| -> Result<String, String> {
        let splits: [(&str, Vec<&Sample>); 6] = [
            ("base_train", base.iter().filter(|s| s.split == Split::BaseTrain).collect()),
            ("base_val", base.iter().filter(|s| s.split == Split::BaseVal).collect()),
            ("base", base.iter().collect()),
            ("id", id.iter().collect()),
            ("ood", ood.iter().collect()),
            ("noisy_tr", noisy_tr.iter().collect()),
        ];
        for (name, samples) in &splits {
            let h = label_histogram(samples.iter().copied());
            ensure(uniform(&h), format!("{name}: label histogram not uniform {h:?}"))?;
            bal.push(format!("{name}:{}x{}", h.len(), h.values().next().unwrap_or(&0)));
        }
        ensure(seg_bad.is_empty(), format!("noisy_ts segments {seg_bad:?} not uniform"))?;
        covers_cells_once(&base, dims).map_err(|e| format!("base: {e}"))?;
        covers_cells_once(&id, dims).map_err(|e| format!("id: {e}"))?;
        disjoint_chains(&base, Split::BaseTrain, Split::BaseVal)?;
        disjoint_chains(&noisy_tr, Split::NoisyTrain, Split::NoisyVal)?;
        Ok(format!("uniform histograms ({}; noisy_ts d1-d9), count-1 covers 81 cells per object in base and id, train/val chains disjoint", bal.join(" ")))
    })();
    (c1, c2)
}

struct Eval {
    dir: PathBuf,
}

impl Eval {
    fn setup(dir: &Path) -> Self {
        let mut opts = GenerateOptions::new(dir, SEED);
        opts.splits = vec![SplitName::Id, SplitName::Ood, SplitName::NoisyTs];
        opts.segments = vec![9];
        opts.images = false;
        dataset::generate(&opts).expect("generate");
        Eval { dir: dir.into() }
    }

    fn manifest(&self, split: &str) -> PathBuf {
        match split {
            "id" => manifest_path(&self.dir, SplitName::Id),
            "ood" => manifest_path(&self.dir, SplitName::Ood),
            _ => noisy_ts_manifest_path(&self.dir, 9),
        }
    }

    fn run(&self, split: &str, model: ModelSpec, approach: Approach, name: &str) -> MetricReport {
        let out = self.dir.join("runs").join(format!("{name}_{split}"));
        let mut cfg = RunConfig::new(self.manifest(split), model, approach, out);
        cfg.seed = SEED;
        let outcome = evaluate(&cfg).expect("evaluate");
        assert_eq!(outcome.errors, 0, "request errors");
        outcome.report
    }

    fn records(&self, name: &str, split: &str) -> BTreeMap<String, RunRecord> {
        let path = self.dir.join("runs").join(format!("{name}_{split}")).join(RECORDS_FILE);
        read_jsonl::<RunRecord>(&path).expect("records").into_iter().map(|r| (r.id.clone(), r)).collect()
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", x * 100.0)).unwrap_or_else(|| "n/a".into())
}

fn oracle_suite(ev: &Eval) -> Check {
    let mut parts = Vec::new();
    for split in ["id", "ood", "noisy_ts_d9"] {
        let r = ev.run(split, ModelSpec::Oracle, Approach::Ptc, "oracle");
        let all = [Some(r.accuracy), r.f1, r.exact_match, r.consistency];
        ensure(all.iter().all(|v| *v == Some(1.0)), format!("{split}: acc {} f1 {} em {} cons {}", r.accuracy, pct(r.f1), pct(r.exact_match), pct(r.consistency)))?;
        ensure(r.cell_f1.len() == 81 && r.cell_f1.iter().all(|c| *c == Some(100.0)), format!("{split}: cell map not uniformly 100.0"))?;
        parts.push(format!("{split} n={}", r.samples));
    }
    Ok(format!("acc = F1 = EM = cons = 100% and 81 cells at 100.0 on {}", parts.join(", ")))
}

fn pixel_suite(ev: &Eval) -> Check {
    let start = Instant::now();
    let mut parts = Vec::new();
    for split in ["id", "noisy_ts_d9"] {
        let r = ev.run(split, ModelSpec::Pixel, Approach::Ptc, "pixel");
        ensure(r.accuracy == 1.0 && r.f1 == Some(1.0), format!("{split}: acc {} f1 {}", r.accuracy, pct(r.f1)))?;
        ensure(r.consistency == Some(1.0), format!("{split}: consistency {}", pct(r.consistency)))?;

        // Re-score the same responses under CoordCount.
        let run_dir = ev.dir.join("runs").join(format!("pixel_{split}"));
        let responses = ev.dir.join(format!("pixel_{split}_responses.jsonl"));
        export_responses(&run_dir, &responses).map_err(|e| e.to_string())?;
        let rc = ev.run(split, ModelSpec::Offline(responses), Approach::CoordCount, "coordcount");
        ensure(rc.accuracy == 1.0, format!("{split}: coordcount acc {}", rc.accuracy))?;
        let (ptc, cc) = (ev.records("pixel", split), ev.records("coordcount", split));
        ensure(ptc.len() == cc.len() && ptc.len() as u64 == r.samples, "record counts differ")?;
        let mismatches = ptc
            .iter()
            .filter(|(id, p)| cc.get(*id).is_none_or(|c| c.parsed.prediction(Approach::CoordCount) != p.parsed.prediction(Approach::Ptc)))
            .count();
        ensure(mismatches == 0, format!("{split}: {mismatches} samples where CoordCount != PtC"))?;
        parts.push(format!("{split} n={}", r.samples));
    }
    Ok(format!("acc = F1 = 100%, CoordCount == PtC on every sample ({}) in {:.0} s", parts.join(", "), start.elapsed().as_secs_f64()))
}

fn noise_calibration(ev: &Eval) -> Check {
    let noise = parse_noise("omit=0.2,answer=consistent").map_err(|e| e.to_string())?;
    let r = ev.run("id", ModelSpec::Noisy(noise), Approach::Ptc, "noisy_omit02");
    let recall = r.recall.unwrap_or(f64::NAN);
    let (cons, em) = (r.consistency.unwrap_or(0.0), r.exact_match.unwrap_or(1.0));
    let detail = format!("n={} recall {recall:.4} consistency {} EM {}", r.samples, pct(r.consistency), pct(r.exact_match));
    ensure(r.samples >= 10_000, format!("only {} samples", r.samples))?;
    ensure((recall - 0.80).abs() <= 0.01, format!("recall out of 0.80 +- 0.01: {detail}"))?;
    ensure(cons == 1.0, format!("consistency below 100%: {detail}"))?;
    ensure(em < 1.0, format!("EM is 100%: {detail}"))?;
    Ok(detail)
}

#[derive(Deserialize)]
struct CorpusCase {
    name: String,
    approach: String,
    text: String,
    answer: i64,
    coords: Vec<[f64; 2]>,
    prediction: Option<i64>,
}

fn parser_suite() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parser_corpus.jsonl");
    let corpus: Vec<CorpusCase> = read_jsonl(&path).map_err(|e| e.to_string())?;
    ensure(corpus.len() >= 50, format!("corpus has {} cases", corpus.len()))?;
    let mut failed = Vec::new();
    for c in &corpus {
        let approach: Approach = c.approach.parse().map_err(|e| format!("{e}"))?;
        let p = ParsedResponse::parse(&c.text, approach);
        let coords: Vec<[f64; 2]> = p.coords.iter().map(|q| [q.a, q.b]).collect();
        if p.answer != c.answer || coords != c.coords || p.prediction(approach) != c.prediction.unwrap_or(c.answer) {
            failed.push(c.name.clone());
        }
    }
    ensure(failed.is_empty(), format!("corpus failures: {failed:?}"))?;

    const ALPHABET: &[u8] = b"()0123456789,.- \nAnswer:Coordinates<answer></answer>twentyonefive\xc3\xa9\xff";
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut bytes = Vec::with_capacity(96);
    let fuzz = catch_unwind(AssertUnwindSafe(|| -> Result<(), String> {
        for i in 0..1_000_000u32 {
            bytes.clear();
            let len = rng.random_range(0..96);
            for _ in 0..len {
                bytes.push(if i % 2 == 0 { rng.random() } else { ALPHABET[rng.random_range(0..ALPHABET.len())] });
            }
            let text = String::from_utf8_lossy(&bytes);
            let approach = Approach::ALL[i as usize % Approach::ALL.len()];
            let p = ParsedResponse::parse(&text, approach);
            if p.coord_count != p.coords.len() || p.answer < -1 {
                return Err(format!("bad parse of {bytes:?}"));
            }
        }
        Ok(())
    }));
    match fuzz {
        Ok(Ok(())) => Ok(format!("{} corpus cases frozen; 1,000,000 fuzzed byte strings parsed without failure", corpus.len())),
        Ok(Err(e)) => Err(e),
        Err(_) => Err("parser panicked during fuzzing".into()),
    }
}

/// Best (matches, cost) over every partial assignment.
fn brute_force(pred: &[CoordPair], gt: &[CoordPair], tau: f64) -> (usize, f64) {
    fn go(i: usize, pred: &[CoordPair], gt: &[CoordPair], tau: f64, used: &mut Vec<bool>, m: usize, cost: f64, best: &mut (usize, f64)) {
        if i == pred.len() {
            if m > best.0 || (m == best.0 && cost < best.1) {
                *best = (m, cost);
            }
            return;
        }
        go(i + 1, pred, gt, tau, used, m, cost, best);
        for j in 0..gt.len() {
            let d = ((pred[i].a - gt[j].a).powi(2) + (pred[i].b - gt[j].b).powi(2)).sqrt();
            if !used[j] && d <= tau {
                used[j] = true;
                go(i + 1, pred, gt, tau, used, m + 1, cost + d, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(0, pred, gt, tau, &mut vec![false; gt.len()], 0, 0.0, &mut best);
    best
}

fn matching_suite() -> Check {
    let mut rng = StdRng::seed_from_u64(SEED ^ 7);
    let mut checked_pairs = 0;
    for trial in 0..1_000 {
        let tau = [1.0, 2.5, 5.0, 10.0][trial % 4];
        let span = rng.random_range(3.0..25.0);
        let integral = trial % 3 == 0;
        let point = |rng: &mut StdRng| {
            let (a, b): (f64, f64) = (rng.random_range(0.0..span), rng.random_range(0.0..span));
            if integral {
                CoordPair::new(a.round(), b.round())
            } else {
                CoordPair::new(a, b)
            }
        };
        let pred: Vec<CoordPair> = (0..rng.random_range(0..=7)).map(|_| point(&mut rng)).collect();
        let gt: Vec<CoordPair> = (0..rng.random_range(0..=7)).map(|_| point(&mut rng)).collect();
        let m = match_continuous(&pred, &gt, tau);
        let (best_m, best_cost) = brute_force(&pred, &gt, tau);
        let ctx = || format!("trial {trial}: tau {tau} pred {pred:?} gt {gt:?}");
        ensure(m.tally.tp as usize == best_m, format!("{}: {} matches vs {best_m}", ctx(), m.tally.tp))?;
        ensure((m.cost - best_cost).abs() <= 1e-9, format!("{}: cost {} vs {best_cost}", ctx(), m.cost))?;
        ensure(m.tally.fp as usize == pred.len() - best_m && m.tally.fn_ as usize == gt.len() - best_m, format!("{}: tally", ctx()))?;
        let (mut seen_p, mut seen_g, mut sum) = (BTreeSet::new(), BTreeSet::new(), 0.0);
        for &(i, j) in &m.pairs {
            let d = ((pred[i].a - gt[j].a).powi(2) + (pred[i].b - gt[j].b).powi(2)).sqrt();
            ensure(seen_p.insert(i) && seen_g.insert(j) && d <= tau, format!("{}: invalid pair", ctx()))?;
            sum += d;
        }
        ensure(m.pairs.len() == best_m && (sum - m.cost).abs() <= 1e-9, format!("{}: pairs disagree with cost", ctx()))?;
        checked_pairs += best_m;
    }
    Ok(format!("1,000 trials (up to 7 points per side, tau 1-10) agree with brute force on matches and cost; {checked_pairs} matched pairs"))
}

fn random_mask(rng: &mut StdRng) -> Mask {
    let (w, h) = (rng.random_range(8..160u32), rng.random_range(8..160u32));
    let mut m = Mask::new(w, h);
    let kind = rng.random_range(0..4);
    for _ in 0..rng.random_range(1..4) {
        let (cx, cy) = (rng.random_range(0.0..f64::from(w)), rng.random_range(0.0..f64::from(h)));
        let r = rng.random_range(1.0..f64::from(w.min(h)) / 2.0);
        for y in 0..h {
            for x in 0..w {
                let d = ((f64::from(x) - cx).powi(2) + (f64::from(y) - cy).powi(2)).sqrt();
                let on = match kind {
                    0 => d <= r,
                    1 => d <= r && d >= r * 0.6,
                    2 => (f64::from(x) - cx).abs() <= r && (f64::from(y) - cy).abs() <= r * 0.5,
                    _ => rng.random_bool(0.02),
                };
                if on {
                    m.set(x, y, true);
                }
            }
        }
    }
    if m.area() == 0 {
        m.set(rng.random_range(0..w), rng.random_range(0..h), true);
    }
    m
}

fn ellipse(w: u32, h: u32, cx: f64, cy: f64, rx: f64, ry: f64) -> Mask {
    let mut m = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if ((f64::from(x) - cx) / rx).powi(2) + ((f64::from(y) - cy) / ry).powi(2) <= 1.0 {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// An object cut by the frame is a different object; the tolerance only
/// covers resampling.
fn touches_border(m: &Mask) -> bool {
    (0..m.width).any(|x| m.get(x, 0) || m.get(x, m.height - 1)) || (0..m.height).any(|y| m.get(0, y) || m.get(m.width - 1, y))
}

fn pixel_dist(a: NormPoint, b: NormPoint, w: u32, h: u32) -> f64 {
    let ((ax, ay), (bx, by)) = (a.to_pixel(w, h), b.to_pixel(w, h));
    (f64::from(ax) - f64::from(bx)).hypot(f64::from(ay) - f64::from(by))
}

/// Ten objects laid out from the image center outwards.
fn write_tiny(dir: &Path, name: &str, n: usize) {
    let (w, h) = (48u32, 36u32);
    let mut spots: Vec<(u32, u32)> = (0..5).flat_map(|i| (0..4).map(move |j| (9 + 6 * i, 7 + 6 * j))).collect();
    spots.sort_by_key(|(x, y)| ((*x as i64 + 1 - 24).pow(2) + (*y as i64 + 1 - 18).pow(2), *y, *x));
    let mut img = RgbImage::black(w, h);
    let mut labels = vec![0u32; (w * h) as usize];
    for (k, (x0, y0)) in spots.into_iter().take(n).enumerate() {
        for y in y0..y0 + 3 {
            for x in x0..x0 + 3 {
                img.put(x, y, [180, 60, 30 + 10 * k as u8]);
                labels[(y * w + x) as usize] = k as u32 + 1;
            }
        }
    }
    write_png(&dir.join(format!("{name}.png")), &img).expect("png");
    write_label_png(&dir.join(format!("{name}_mask.png")), &labels, w, h).expect("mask");
}

fn real_suite(tmp: &Path) -> Check {
    let mut rng = StdRng::seed_from_u64(SEED ^ 8);
    for t in 0..3_000 {
        let m = random_mask(&mut rng);
        let (px, py) = mask_to_pixel(&m).map_err(|e| e.to_string())?;
        ensure(m.get(px, py), format!("mask {t}: pixel off mask"))?;
        let p = mask_to_point(&m).map_err(|e| e.to_string())?;
        let (qx, qy) = p.to_pixel(m.width, m.height);
        ensure(m.get(qx, qy), format!("mask {t}: point {p:?} off mask"))?;
        ensure((p.x * 10.0).round() == p.x * 10.0 && (0.0..=100.0).contains(&p.x) && (0.0..=100.0).contains(&p.y), "point not one-decimal")?;
    }

    let cfg = AugmentConfig::default();
    let mut worst: f64 = 0.0;
    let (mut checked, mut clipped) = (0, 0);
    for t in 0..1_000 {
        let (w, h) = (rng.random_range(60..140u32), rng.random_range(60..140u32));
        let (rx, ry) = (rng.random_range(3.0..10.0), rng.random_range(3.0..10.0));
        let cx = rng.random_range(0.3..0.7) * f64::from(w);
        let cy = rng.random_range(0.3..0.7) * f64::from(h);
        let mask = ellipse(w, h, cx, cy, rx, ry);
        let p = mask_to_point(&mask).map_err(|e| e.to_string())?;
        let mut srng = seed::stream(SEED, &["accept", "augment", &t.to_string()]);
        let recipe: Vec<AugmentOp> = cfg.sample(w, h, &mut srng).into_iter().filter(|op| !matches!(op, AugmentOp::ColorJitter { .. })).collect();
        let mut cases: Vec<Vec<AugmentOp>> = recipe.iter().map(|op| vec![*op]).collect();
        cases.push(recipe);
        for ops in cases {
            let Ok((img, pts)) = augment(&mask.to_image(), &[p], &ops) else { continue };
            let moved = Mask::from_image(&img);
            if moved.area() == 0 || touches_border(&moved) {
                clipped += 1;
                continue;
            }
            let q = mask_to_point(&moved).map_err(|e| e.to_string())?;
            let d = pixel_dist(pts[0], q, img.width, img.height);
            worst = worst.max(d);
            checked += 1;
            ensure(d <= 2.0, format!("trial {t}: ellipse {w}x{h} c=({cx}, {cy}) r=({rx}, {ry}): {ops:?} moved the point {d:.2} px"))?;
        }
    }

    let input = tmp.join("real_in");
    std::fs::create_dir_all(&input).map_err(|e| e.to_string())?;
    let mut csv = String::from("image,mask,scene_id,surface,view\n");
    // 60 scenes of 11-20 objects and 190 of 1-10, ten views each.
    for s in 0..250 {
        let surface = ["floor", "table"][s % 2];
        for v in 0..10 {
            let n = if s < 60 { 11 + v } else { 1 + v };
            let name = format!("s{s:03}_v{v}");
            write_tiny(&input, &name, n);
            csv.push_str(&format!("{name}.png,{name}_mask.png,scene{s:03},{surface},{}\n", ["top", "bottom"][v % 2]));
        }
    }
    std::fs::write(input.join("scenes.csv"), csv).map_err(|e| e.to_string())?;
    let summary = adapt_real(&AdaptOptions::new(&input, tmp.join("real_out"), SEED)).map_err(|e| e.to_string())?;
    let sizes = ["real_train", "real_val", "real_id", "real_ood"].map(|k| summary.get(k).copied().unwrap_or(0));
    let train: Vec<ManifestRecord> = read_jsonl(&tmp.join("real_out/real_train.jsonl")).map_err(|e| e.to_string())?;
    let originals = train.iter().filter(|r| r.source_id.is_none()).count();
    ensure(sizes == [12_760, 200, 420, 510] && originals == 1_160, format!("split sizes {sizes:?}, {originals} originals"))?;
    Ok(format!(
        "3,000 random masks on-mask; {checked} augmentations commute (worst {worst:.2} px <= 2, {clipped} frame-clipped cases excluded); reference split 1,160 -> 12,760 train (x11), 200 / 420 / 510"
    ))
}

fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir).expect("read_dir").map(|e| e.expect("entry").path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let digest = hex::encode(Sha256::digest(std::fs::read(&p).expect("read")));
                out.insert(p.strip_prefix(root).expect("prefix").display().to_string(), digest);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn generate_and_ablate(root: &Path, full: bool) {
    let mut opts = GenerateOptions::new(root, SEED);
    if !full {
        // All manifests, images for every split except Noisy_TS d1-d8.
        opts.images = false;
        opts.splits = vec![SplitName::NoisyTs];
        dataset::generate(&opts).expect("generate");
        opts.images = true;
        opts.segments = vec![9];
        dataset::generate(&opts).expect("generate");
        opts.splits = vec![SplitName::Base, SplitName::Id, SplitName::Ood, SplitName::NoisyTr];
    }
    dataset::generate(&opts).expect("generate");
    dataset::ablate(root, SEED, true).expect("ablate");
}

fn determinism(tmp: &Path) -> Check {
    let full = std::env::var("POINTCOUNT_ACCEPT_FULL").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let (a, b) = (tmp.join("det_a"), tmp.join("det_b"));
    generate_and_ablate(&a, full);
    let ha = hash_tree(&a);
    std::fs::remove_dir_all(&a).ok();
    generate_and_ablate(&b, full);
    let hb = hash_tree(&b);
    std::fs::remove_dir_all(&b).ok();
    let manifests = ha.keys().filter(|k| k.ends_with(".jsonl")).count();
    let images = ha.keys().filter(|k| k.ends_with(".png")).count();
    // 4 splits, 9 Noisy_TS segments, 5 ablation sets; one image per sample plus the black image.
    let want_images = if full { 7_290 + 17_496 + 17_496 + 7_290 + 452_709 + 1 } else { 7_290 + 17_496 + 17_496 + 7_290 + 50_301 + 1 };
    ensure(manifests == 18 && images == want_images, format!("{manifests} manifests (want 18), {images} images (want {want_images})"))?;
    let differing: Vec<&String> = ha.iter().filter(|(k, v)| hb.get(*k) != Some(v)).map(|(k, _)| k).collect();
    ensure(ha.len() == hb.len() && differing.is_empty(), format!("{} files differ, e.g. {:?}", differing.len(), differing.first()))?;
    let scope = if full { "all images" } else { "images of base, id, ood, noisy_tr, noisy_ts d9, ablation" };
    Ok(format!("{manifests} manifests and {images} images byte-identical across two runs ({scope}) in {:.0} s", start.elapsed().as_secs_f64()))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn report(n: u32, check: Check, failures: &mut u32) {
    match check {
        Ok(detail) => println!("criterion {n}: PASS: {detail}"),
        Err(detail) => {
            *failures += 1;
            println!("criterion {n}: FAIL: {detail}");
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let only: Option<BTreeSet<u32>> =
        std::env::var("POINTCOUNT_ACCEPT_ONLY").ok().map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let wants = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut failures = 0;
    let mut skipped = 0;
    let mut run = |n: u32, f: &mut dyn FnMut() -> Check, failures: &mut u32| {
        if wants(n) {
            report(n, guarded(f), failures);
        } else {
            skipped += 1;
            println!("criterion {n}: SKIP");
        }
    };

    let (c1, c2) = if wants(1) || wants(2) {
        guarded(|| Ok(cardinality_and_balance())).unwrap_or_else(|e| (Err(e.clone()), Err(e)))
    } else {
        (Err("skipped".into()), Err("skipped".into()))
    };
    run(1, &mut || c1.clone(), &mut failures);
    run(2, &mut || c2.clone(), &mut failures);

    let ev = if wants(3) || wants(4) || wants(5) {
        guarded(|| Ok(Eval::setup(&tmp.path().join("eval")))).map(Some)
    } else {
        Ok(None)
    };
    let with_ev = |f: fn(&Eval) -> Check| match &ev {
        Ok(Some(ev)) => f(ev),
        Ok(None) => Err("evaluation setup skipped".into()),
        Err(e) => Err(format!("setup failed: {e}")),
    };
    run(3, &mut || with_ev(oracle_suite), &mut failures);
    run(4, &mut || with_ev(pixel_suite), &mut failures);
    run(5, &mut || with_ev(noise_calibration), &mut failures);
    run(6, &mut parser_suite, &mut failures);
    run(7, &mut matching_suite, &mut failures);
    run(8, &mut || real_suite(tmp.path()), &mut failures);
    run(9, &mut || determinism(tmp.path()), &mut failures);

    if failures > 0 {
        println!("acceptance: {failures} of 9 criteria failed");
        std::process::exit(1);
    }
    if skipped > 0 {
        println!("acceptance: {} criteria passed, {skipped} skipped", 9 - skipped);
    } else {
        println!("acceptance: all 9 criteria passed");
    }
}
