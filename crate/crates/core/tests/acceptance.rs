//! Acceptance gate. Runs every primary criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::*;
use vulnaug::corpusbuild::{
    build_corpus, build_sample, read_samples, split_corpus, AugmentedSample, BuildOptions,
};
use vulnaug::evalsuite::{
    human_eval_aggregate, human_eval_session, read_log, rouge1, rouge1_tokens, EvalItem,
};
use vulnaug::harvest::{
    list_cves, scrape_records, FetchStatus, FixtureFetcher, ReferenceDoc, ScrapedRecord, VulnRecord,
};
use vulnaug::semgate::{
    cosine, cosine_values, gate_dual, gate_single, EncoderBand, GateConfig, GateMode, GateReason,
    HashEmbedder, ProviderSet,
};
use vulnaug::textkit::{clean, residual_matches, token_count};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_secs), || {
        format!("took {:.2?}, limit {limit_secs} s", elapsed)
    })
}

// ---------------------------------------------------------------- ROUGE-1

/// Clipped overlap by exhaustive matching: each prediction token claims the
/// first unclaimed equal target token.
fn brute_overlap(pred: &[String], target: &[String]) -> usize {
    let mut claimed = vec![false; target.len()];
    let mut hits = 0;
    for p in pred {
        if let Some(j) = (0..target.len()).find(|&j| !claimed[j] && target[j] == *p) {
            claimed[j] = true;
            hits += 1;
        }
    }
    hits
}

fn oracle_rouge(pred: &[String], target: &[String]) -> (f64, f64, f64) {
    let hits = brute_overlap(pred, target) as f64;
    let r = if target.is_empty() { 0.0 } else { hits / target.len() as f64 };
    let p = if pred.is_empty() { 0.0 } else { hits / pred.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (r, p, f)
}

fn rouge_criterion() -> Check {
    let start = Instant::now();
    let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.random_range(0..40);
        let width = rng.random_range(1..=vocab.len());
        (0..n).map(|_| vocab[rng.random_range(0..width)].clone()).collect()
    };
    for case in 0..10_000 {
        let pred = draw(&mut rng);
        let target = draw(&mut rng);
        let got = rouge1_tokens(&pred, &target);
        let want = oracle_rouge(&pred, &target);
        ensure((got.recall, got.precision, got.f1) == want, || {
            format!("case {case}: {got:?} vs oracle {want:?}")
        })?;
        ensure(rouge1(&pred.join(" "), &target.join(" ")) == got, || {
            format!("case {case}: string and token scoring differ")
        })?;
        if got.precision + got.recall > 0.0 {
            let f = 2.0 * got.precision * got.recall / (got.precision + got.recall);
            ensure((got.f1 - f).abs() <= 1e-12, || format!("case {case}: F1 identity off by {}", got.f1 - f))?;
        }
        if !pred.is_empty() {
            let same = rouge1_tokens(&pred, &pred);
            ensure((same.recall, same.precision, same.f1) == (1.0, 1.0, 1.0), || {
                format!("case {case}: identity gave {same:?}")
            })?;
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!("10000 pairs exact, {:.2?}", start.elapsed()))
}

// ------------------------------------------------------------------- gate

/// Rule table in integer hundredths.
fn oracle_single(s: i32, lower: i32, upper: i32) -> GateReason {
    if s < lower {
        GateReason::BelowLower
    } else if s > upper {
        GateReason::AboveCap
    } else {
        GateReason::InBand
    }
}

fn oracle_dual(u: i32, m: i32) -> GateReason {
    if u < 50 {
        GateReason::BelowLower
    } else if m < 70 {
        GateReason::BelowLower
    } else if m > 90 {
        GateReason::AboveCap
    } else if u > 90 {
        GateReason::AboveCap
    } else if (u - m).abs() > 20 {
        GateReason::Disagreement
    } else {
        GateReason::InBand
    }
}

fn gate_criterion() -> Check {
    let start = Instant::now();
    let hundredths = |i: i32| i as f64 / 100.0;
    let mut cases = 0usize;
    for (band, lo, hi) in [(EncoderBand::USE_DEFAULT, 60, 90), (EncoderBand::MPNET_DEFAULT, 70, 90)] {
        for s in -100..=100 {
            let d = gate_single(hundredths(s), &band).map_err(|e| e.to_string())?;
            let want = oracle_single(s, lo, hi);
            ensure(d.reason == want && d.accepted == (want == GateReason::InBand), || {
                format!("single {s}/100 in [{lo},{hi}]: {:?} vs {want:?}", d.reason)
            })?;
            cases += 1;
        }
    }
    let cfg = GateConfig::with_mode(GateMode::Dual);
    for u in -100..=100 {
        for m in -100..=100 {
            let d = gate_dual(hundredths(u), hundredths(m), &cfg).map_err(|e| e.to_string())?;
            let want = oracle_dual(u, m);
            ensure(d.reason == want && d.accepted == (want == GateReason::InBand), || {
                format!("dual ({u}, {m})/100: {:?} vs {want:?}", d.reason)
            })?;
            cases += 1;
        }
    }
    ensure(gate_single(1.01, &EncoderBand::USE_DEFAULT).is_err(), || "score above 1 accepted".into())?;
    ensure(gate_dual(0.7, -1.01, &cfg).is_err(), || "score below -1 accepted".into())?;
    within(start.elapsed(), 10)?;
    Ok(format!("{cases} grid cases agree, {:.2?}", start.elapsed()))
}

// ----------------------------------------------------------------- cosine

fn hand_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    dot / (aa.sqrt() * bb.sqrt())
}

fn cosine_criterion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let dim = rng.random_range(1..=768);
        let a: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = cosine_values(&a, &b).map_err(|e| e.to_string())?;
        let err = (got - hand_cosine(&a, &b)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("case {case}: error {err:e}"))?;
        let self_sim = cosine_values(&a, &a).map_err(|e| e.to_string())?;
        ensure((self_sim - 1.0).abs() <= 1e-12, || format!("case {case}: self-similarity {self_sim}"))?;
        let alpha = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = a.iter().map(|x| x * alpha).collect();
        let s = cosine_values(&scaled, &b).map_err(|e| e.to_string())?;
        ensure((s - got).abs() <= 1e-9, || format!("case {case}: scaling by {alpha} moved {}", s - got))?;
    }
    let enc = HashEmbedder::new("use", 7);
    let v = enc.embed_text("heap overflow in the image parser");
    let self_sim = cosine(&v, &v).map_err(|e| e.to_string())?;
    ensure((self_sim - 1.0).abs() <= 1e-12, || format!("embedder self-similarity {self_sim}"))?;
    Ok(format!("1000 pairs, worst error {worst:.1e}"))
}

// --------------------------------------------------------------- cleaning

#[derive(Deserialize)]
struct GoldenPair {
    raw: String,
    clean: String,
}

fn fuzz_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "overflow", "Parser", "v2.1", "https://example.test/a?b=1", "www.vendor.test/x.",
        "root@corp.test", "+1 (555) 010-4477", "555.010.9999", "+44 20 7946 0958", "555", "010-9999",
        "\u{201c}", "\u{201d}", "\u{2014}", "\u{2019}", "\u{2026}", "#", "$", "%", "&", "*", "<b>", "|",
        "\u{a9}", "caf\u{e9}", ".", ",", ";", "(", ")", "\"", "'", "/", "-", "@", "\u{1F525}",
    ];
    const SEPS: &[&str] = &[" ", "  ", "\t", "\n", "", "\u{a0}"];
    let n = rng.random_range(0..60);
    (0..n)
        .map(|_| {
            let p = PIECES[rng.random_range(0..PIECES.len())];
            let s = SEPS[rng.random_range(0..SEPS.len())];
            format!("{p}{s}")
        })
        .collect()
}

fn fixture_scrape() -> Result<(Vec<VulnRecord>, Vec<ScrapedRecord>), String> {
    let fetcher = FixtureFetcher::open(archive()).map_err(|e| e.to_string())?;
    let cfg = e2e_harvest_config();
    let records = list_cves(&cfg, &fetcher, None).map_err(|e| e.to_string())?;
    let scraped = scrape_records(&records, &cfg, &fetcher);
    Ok((records, scraped))
}

fn cleaning_criterion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let raw = fuzz_text(&mut rng);
        let once = clean(&raw);
        let twice = clean(&once.text);
        ensure(twice == once, || format!("fuzz case {case}: not idempotent on {raw:?}"))?;
        ensure(residual_matches(&once.text).is_empty(), || format!("fuzz case {case}: residue in {:?}", once.text))?;
    }

    let (records, scraped) = fixture_scrape()?;
    let mut texts: Vec<&str> = records.iter().map(|r| r.description.as_str()).collect();
    for s in &scraped {
        for d in &s.docs {
            texts.extend(d.paragraphs.iter().map(String::as_str));
        }
    }
    for t in &texts {
        let left = residual_matches(&clean(t).text);
        ensure(left.is_empty(), || format!("residue {left:?} after cleaning {t:?}"))?;
    }

    let golden = fs::read_to_string(fixtures().join("clean/golden.jsonl")).map_err(|e| e.to_string())?;
    let pairs: Vec<GoldenPair> =
        golden.lines().map(serde_json::from_str).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(pairs.len() == 50, || format!("golden file has {} pairs", pairs.len()))?;
    for (i, p) in pairs.iter().enumerate() {
        let got = clean(&p.raw).text;
        ensure(got == p.clean, || format!("golden pair {}: {:?} -> {got:?}, want {:?}", i + 1, p.raw, p.clean))?;
    }
    Ok(format!("1000 fuzzed idempotent, {} fixture texts clean, 50/50 golden", texts.len()))
}

// ----------------------------------------------------------- length rules

fn words(n: usize, word: &str) -> String {
    vec![word; n].join(" ")
}

fn length_criterion() -> Check {
    let open = EncoderBand::new(-1.0, 1.0).map_err(|e| e.to_string())?;
    let gate = GateConfig { mode: GateMode::SingleUse, use_band: open, ..GateConfig::default() };
    let providers = ProviderSet::hash(7);
    let opts = BuildOptions::default();
    let record = VulnRecord {
        cve_id: "CVE-2020-0001".into(),
        description: "A heap overflow in the demo parser allows code execution.".into(),
        references: vec!["https://a.test/1".into()],
        published: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
    };
    let paragraphs = vec![
        words(20, "overflow"),
        words(21, "parser"),
        // 21 raw words, 20 once the link is gone
        format!("{} https://a.test/x", words(20, "heap")),
    ];
    let doc = ReferenceDoc {
        source_url: "https://a.test/1".into(),
        fetch_status: FetchStatus::Ok,
        paragraphs,
    };
    let outcome = build_sample(&record, std::slice::from_ref(&doc), &gate, &providers, &opts);
    let verdicts: Vec<Option<bool>> =
        outcome.candidates.iter().map(|c| c.decision.as_ref().map(|d| d.accepted)).collect();
    ensure(verdicts == vec![None, Some(true), None], || format!("filter verdicts {verdicts:?}"))?;
    let sample = outcome.sample.ok_or("21-word paragraph produced no sample")?;
    ensure(sample.provenance.len() == 1 && sample.provenance[0].para_index == 1, || {
        format!("provenance {:?}", sample.provenance)
    })?;

    // long inputs and a long description so both caps bind
    let long_desc = words(400, "flaw");
    let docs: Vec<ReferenceDoc> = (0..3)
        .map(|i| ReferenceDoc {
            source_url: format!("https://a.test/{i}"),
            fetch_status: FetchStatus::Ok,
            paragraphs: (0..5).map(|j| words(150, &format!("term{i}x{j}"))).collect(),
        })
        .collect();
    let scraped = vec![ScrapedRecord {
        record: VulnRecord { description: long_desc, ..record },
        docs,
    }];
    let build = build_corpus(&scraped, &gate, &providers, &opts);
    ensure(build.samples.len() == 1, || "long record produced no sample".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let codes = pipeline(dir.path());
    ensure(codes.iter().all(|&c| c == 0), || format!("pipeline exit codes {codes:?}"))?;
    let e2e: Vec<AugmentedSample> = read_samples(&dir.path().join("corpus.jsonl")).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for s in build.samples.iter().chain(&e2e) {
        let (i, t) = (token_count(&s.input_text), token_count(&s.target_summary));
        ensure(i <= 1000 && t <= 250, || format!("{}: {i}/{t} tokens", s.cve_id))?;
        ensure(s.input_token_count == i && s.target_token_count == t, || format!("{}: stale counts", s.cve_id))?;
        checked += 1;
    }
    let capped = &build.samples[0];
    ensure(capped.input_token_count == 1000 && capped.target_token_count == 250, || {
        format!("long sample capped to {}/{}", capped.input_token_count, capped.target_token_count)
    })?;
    Ok(format!("20 rejected, 21 accepted, caps hold on {checked} samples"))
}

// -------------------------------------------------------- paragraph cap

fn paragraph_cap_criterion() -> Check {
    let (_, scraped) = fixture_scrape()?;
    let docs: Vec<&ReferenceDoc> = scraped.iter().flat_map(|s| &s.docs).collect();
    let longest = docs.iter().map(|d| d.paragraphs.len()).max().unwrap_or(0);
    ensure(longest <= 100, || format!("a document kept {longest} paragraphs"))?;
    let big = docs
        .iter()
        .find(|d| d.source_url == "https://petrel-media.test/changelog/full")
        .ok_or("250-paragraph page missing from scrape")?;
    ensure(big.paragraphs.len() == 100, || format!("250-paragraph page kept {}", big.paragraphs.len()))?;
    let ends = (big.paragraphs.first(), big.paragraphs.last());
    ensure(
        ends.0.is_some_and(|p| p.starts_with("Release note 1:"))
            && ends.1.is_some_and(|p| p.starts_with("Release note 100:")),
        || format!("kept paragraphs run from {:?} to {:?}", ends.0, ends.1),
    )?;
    Ok(format!("{} documents, 250-paragraph page kept 100", docs.len()))
}

// ----------------------------------------------------------------- splits

fn split_criterion() -> Check {
    let samples: Vec<AugmentedSample> = (0..1000)
        .map(|i| AugmentedSample {
            cve_id: format!("CVE-2020-{i:05}"),
            input_text: format!("input {i}"),
            target_summary: format!("target {i}"),
            provenance: vec![],
            input_token_count: 2,
            target_token_count: 2,
        })
        .collect();
    let split = split_corpus(&samples, 42).map_err(|e| e.to_string())?;
    let sizes = (split.train.len(), split.validation.len(), split.test.len());
    ensure(sizes == (810, 90, 100), || format!("sizes {sizes:?}"))?;
    let mut ids: Vec<&str> =
        split.train.iter().chain(&split.validation).chain(&split.test).map(|s| s.cve_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ensure(ids.len() == 1000, || format!("{} distinct ids across parts", ids.len()))?;
    ensure(split_corpus(&samples, 42).map_err(|e| e.to_string())? == split, || "same seed, different split".into())?;
    let mut shuffled = samples.clone();
    shuffled.reverse();
    ensure(split_corpus(&shuffled, 42).map_err(|e| e.to_string())? == split, || "input order changed the split".into())?;
    ensure(split_corpus(&samples, 43).map_err(|e| e.to_string())?.test != split.test, || "seed ignored".into())?;
    Ok("810/90/100, disjoint, exhaustive, deterministic".into())
}

// ------------------------------------------------------------ end to end

fn e2e_criterion() -> Check {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    for dir in [a.path(), b.path()] {
        let codes = pipeline(dir);
        ensure(codes.iter().all(|&c| c == 0), || format!("exit codes {codes:?}"))?;
    }
    for name in ["corpus.jsonl", "report.json"] {
        let x = fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
        ensure(!x.is_empty() && x == y, || format!("{name} differs between runs"))?;
    }
    within(start.elapsed(), 60)?;
    Ok(format!("two offline runs byte-identical, {:.2?}", start.elapsed()))
}

// ------------------------------------------------------------ human eval

fn human_eval_criterion() -> Check {
    let items: Vec<EvalItem> = (1..=5)
        .map(|i| EvalItem {
            sample_id: format!("CVE-2020-1000{i}"),
            input: format!("input text {i}"),
            target: format!("target {i}"),
            prediction: format!("prediction {i}"),
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("grades.jsonl");
    let now = || Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();

    let mut out = Vec::new();
    let mut first = "3 2 2 3\n4 1 1 1\n1 1 1 1\nq\n".as_bytes();
    let s1 = human_eval_session(&items, "ann", &log, &mut first, &mut out, now).map_err(|e| e.to_string())?;
    ensure(s1.interrupted && s1.recorded.len() == 2, || {
        format!("first session: interrupted={} recorded={}", s1.interrupted, s1.recorded.len())
    })?;

    let mut second = "2 3 2 1\n0 2 2 2\n2,2,2,2\n3 3 3 3\n".as_bytes();
    let s2 = human_eval_session(&items, "ann", &log, &mut second, &mut out, now).map_err(|e| e.to_string())?;
    ensure(!s2.interrupted && s2.resumed == 2 && s2.recorded.len() == 3, || {
        format!("second session: resumed={} recorded={}", s2.resumed, s2.recorded.len())
    })?;
    let shown = String::from_utf8_lossy(&out);
    let rejections = shown.matches("Need four whole numbers between 1 and 3.").count();
    ensure(rejections == 2, || format!("{rejections} rejections shown"))?;

    let logged = read_log(&log).map_err(|e| e.to_string())?;
    let grades: Vec<(String, [u8; 4])> = logged.iter().map(|r| (r.sample_id.clone(), r.grades())).collect();
    let want: Vec<(String, [u8; 4])> = [[3, 2, 2, 3], [1, 1, 1, 1], [2, 3, 2, 1], [2, 2, 2, 2], [3, 3, 3, 3]]
        .into_iter()
        .enumerate()
        .map(|(i, g)| (format!("CVE-2020-1000{}", i + 1), g))
        .collect();
    ensure(grades == want, || format!("log holds {grades:?}"))?;

    let summary = human_eval_aggregate(&logged).map_err(|e| e.to_string())?;
    // F 11/5, Cm 11/5, Cr 10/5, U 10/5
    let means = [summary.fluency, summary.completeness, summary.correctness, summary.understanding];
    ensure(summary.records == 5 && means == [2.2, 2.2, 2.0, 2.0], || format!("means {means:?}"))?;
    ensure(means.iter().all(|m| (1.0..=3.0).contains(m)), || "mean outside [1, 3]".into())?;
    Ok("5 graded across an interrupt, 2 bad lines rejected, means 2.2/2.2/2.0/2.0".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("rouge-1 correctness", rouge_criterion),
        ("gate correctness", gate_criterion),
        ("cosine", cosine_criterion),
        ("cleaning", cleaning_criterion),
        ("length rules", length_criterion),
        ("paragraph cap", paragraph_cap_criterion),
        ("splits", split_criterion),
        ("end-to-end determinism", e2e_criterion),
        ("human-eval protocol", human_eval_criterion),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS  {name:<24} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<24} {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
