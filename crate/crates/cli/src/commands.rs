use crate::config::RunConfig;
use crate::manifest::{
    format_range, parse_range, run_hash, sha256_hex, HashingReader, HashingWriter, Manifest,
    CODE_VERSION,
};
use anyhow::{anyhow, bail, Context, Result};
use maskbnn::analysis::{
    write_attack_csv, write_tvla_csv, DpaAccumulator, Gadget, ProbeMode, TestOrder, Tvla,
    MAX_ATTACK_WEIGHTS,
};
use maskbnn::bnn::{toy_model, BnnModel};
use maskbnn::leakage::{
    default_fixed_input, Campaign, CampaignConfig, Label, LeakageError, TraceReader, TraceWriter,
};
use maskbnn::masked_gates::TRICHINA_LATENCY;
use rayon::prelude::*;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

const READ_CHUNK: usize = 4096;
const MERGE_CHUNK: usize = 256;

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn file_name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn load_model(path: &Path) -> Result<(BnnModel, String)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let m = BnnModel::parse(&text).with_context(|| format!("model {}", path.display()))?;
    Ok((m, text))
}

pub fn simulate(config: &Path, out: Option<PathBuf>) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    let prefix = out
        .or_else(|| {
            cfg.out
                .as_ref()
                .map(|o| config.parent().unwrap_or(Path::new(".")).join(o))
        })
        .unwrap_or_else(|| PathBuf::from("run"));
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let (model, model_text) = match (cfg.variant.uses_model(), &cfg.model) {
        (false, _) => (None, String::new()),
        (true, Some(p)) => {
            let (m, t) = load_model(p)?;
            (Some(m), t)
        }
        (true, None) => {
            let m = toy_model(
                cfg.model_seed,
                cfg.n_in,
                cfg.hidden(),
                cfg.n_out,
                cfg.pixel_width,
                cfg.width,
            )?;
            let t = m.to_text();
            (Some(m), t)
        }
    };
    let variant = cfg.variant.variant();
    let fixed_input = match &cfg.fixed_input {
        Some(f) => f.clone(),
        None => default_fixed_input(&variant, model.as_ref(), &cfg.key, &cfg.iv)?,
    };
    let campaign = Campaign::new(
        model.as_ref(),
        CampaignConfig {
            variant,
            n_traces: cfg.n_traces,
            leak: cfg.leak,
            key: cfg.key,
            base_iv: cfg.iv,
            fixed_input,
            prng: cfg.prng,
        },
    )?;
    let canonical = cfg.canonical();
    let hash = run_hash(&canonical, &model_text);
    let n_samples = campaign.n_samples();

    let trace_path = with_suffix(&prefix, "sctr");
    let images_path = with_suffix(&prefix, "images");
    let manifest_path = with_suffix(&prefix, "manifest");
    let model_path = with_suffix(&prefix, "bnn");

    let mut traces = TraceWriter::new(
        HashingWriter::new(create(&trace_path)?),
        cfg.n_traces,
        n_samples,
    )?;
    let mut images = create(&images_path)?;
    writeln!(images, "# run: {hash}")?;
    writeln!(images, "# n_traces: {}", cfg.n_traces)?;
    campaign.run(|t| {
        traces.write(t.label, &t.samples)?;
        let px: Vec<String> = t.input.iter().map(|p| p.to_string()).collect();
        writeln!(
            images,
            "{} {} {}",
            t.trace_index,
            t.label as u8,
            px.join(" ")
        )
        .map_err(LeakageError::from)
    })?;
    let trace_sha = traces.finish()?.finish()?;
    images.flush()?;

    let mut m = Manifest::default();
    m.set("format", 1);
    m.set("code_version", CODE_VERSION);
    m.set("hash", &hash);
    for line in canonical.lines() {
        let (k, v) = line.split_once(" = ").unwrap();
        m.set(&format!("config.{k}"), v);
    }
    m.set("trace_file", file_name(&trace_path));
    m.set("trace_sha256", trace_sha);
    m.set("images_file", file_name(&images_path));
    if model.is_some() {
        fs::write(&model_path, &model_text)
            .with_context(|| format!("writing {}", model_path.display()))?;
        m.set("model_file", file_name(&model_path));
        m.set("model_sha256", sha256_hex(model_text.as_bytes()));
    }
    m.set("n_traces", cfg.n_traces);
    m.set("n_samples", n_samples);
    if let Some(nl) = campaign.netlist() {
        let s = nl.stats();
        m.set("nets", s.nets);
        m.set("and2", s.and2);
        m.set("xor2", s.xor2);
        m.set("not", s.not);
        m.set("mux2", s.mux2);
        m.set("registers", s.registers);
        m.set("input_bits", s.input_bits);
        m.set("logic_depth", s.depth);
        m.set("random_bits_per_cycle", nl.random_nets().len());
    }
    match campaign.datapath() {
        Some(dp) => {
            m.set("adder_latency", dp.latency);
            m.set("regfile_depth", dp.regfile_depth);
            m.set("random_bits_per_inference", dp.random_bits_per_inference());
        }
        None if campaign.netlist().is_some() => {
            m.set("gate_latency", TRICHINA_LATENCY);
            let per_cycle = campaign.netlist().unwrap().random_nets().len();
            m.set("random_bits_per_trace", per_cycle * n_samples);
        }
        None => {
            m.set("adder_latency", 0);
            m.set("random_bits_per_inference", 0);
        }
    }
    let (input_w, rest_w) = campaign.layer_windows();
    m.set("window_input", format_range(&input_w));
    m.set("window_hidden_output", format_range(&rest_w));
    let windows: Vec<String> = (0..MAX_ATTACK_WEIGHTS)
        .map_while(|i| campaign.attack_window(i))
        .map(|r| format_range(&r))
        .collect();
    if !windows.is_empty() {
        m.set("attack_windows", windows.join(" "));
    }
    fs::write(&manifest_path, m.to_text())
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    println!(
        "wrote {} traces x {} samples to {}",
        cfg.n_traces,
        n_samples,
        trace_path.display()
    );
    println!("manifest {} (run {})", manifest_path.display(), &hash[..16]);
    Ok(0)
}

fn resolve_window(spec: Option<&str>, manifest: Option<&Path>, n: usize) -> Result<Range<usize>> {
    let r = match spec {
        None => 0..n,
        Some(name @ ("input" | "hidden-output")) => {
            let path = manifest.ok_or_else(|| anyhow!("window {name:?} needs --manifest"))?;
            let m = Manifest::load(path)?;
            let key = if name == "input" {
                "window_input"
            } else {
                "window_hidden_output"
            };
            parse_range(m.require(key)?)?
        }
        Some(s) => parse_range(s)?,
    };
    if r.end > n {
        bail!(
            "window {}..{} exceeds the {n} samples per trace",
            r.start,
            r.end
        );
    }
    Ok(r)
}

fn csv_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn tvla(
    traces: &Path,
    order: &str,
    window: Option<&str>,
    manifest: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8> {
    let order_v = match order {
        "1" => TestOrder::First,
        "2" => TestOrder::Second,
        _ => TestOrder::Frequency,
    };
    let mut reader =
        TraceReader::new(open(traces)?).with_context(|| format!("reading {}", traces.display()))?;
    let win = resolve_window(window, manifest, reader.n_samples)?;
    let mut acc = Tvla::new(order_v, win.len())?;
    loop {
        let mut chunk = Vec::with_capacity(READ_CHUNK);
        while chunk.len() < READ_CHUNK {
            match reader
                .next_trace()
                .with_context(|| format!("reading {}", traces.display()))?
            {
                Some(t) => chunk.push(t),
                None => break,
            }
        }
        if chunk.is_empty() {
            break;
        }
        // Fixed chunking keeps the summation order independent of the
        // worker count.
        let parts: Vec<Tvla> = chunk
            .par_chunks(MERGE_CHUNK)
            .map(|c| {
                let mut t = Tvla::new(order_v, win.len()).unwrap();
                for (label, s) in c {
                    t.add(*label, &s[win.clone()]);
                }
                t
            })
            .collect();
        for p in &parts {
            acc.merge(p);
        }
    }
    reader
        .expect_end()
        .with_context(|| format!("reading {}", traces.display()))?;
    let report = acc.report()?;
    let meta = [
        ("order", order.to_string()),
        ("traces", traces.display().to_string()),
        ("window", format_range(&win)),
    ];
    write_tvla_csv(csv_out(out)?, &report, &meta)?;
    let verdict = if report.passed() { "pass" } else { "leak" };
    let msg = format!(
        "max |t| = {:.3} over samples {} (threshold {}): {verdict}",
        report.max_abs_t,
        format_range(&win),
        report.threshold
    );
    if out.is_some() {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
    Ok(if report.passed() { 0 } else { 1 })
}

struct Images {
    run: String,
    rows: Vec<(Label, Vec<u32>)>,
}

fn read_images(path: &Path) -> Result<Images> {
    let ctx = |line: usize| format!("{} line {line}", path.display());
    let mut run = None;
    let mut rows = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| ctx(i + 1))?;
        if let Some(h) = line.strip_prefix("# run: ") {
            run = Some(h.trim().to_string());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let index: usize = it
            .next()
            .unwrap()
            .parse()
            .map_err(|_| anyhow!("{}: bad trace index", ctx(i + 1)))?;
        if index != rows.len() {
            bail!(
                "{}: expected trace {} but found {index}",
                ctx(i + 1),
                rows.len()
            );
        }
        let label = it
            .next()
            .and_then(|l| l.parse::<u8>().ok())
            .and_then(Label::from_u8)
            .ok_or_else(|| anyhow!("{}: bad label", ctx(i + 1)))?;
        let px = it
            .map(|p| p.parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| anyhow!("{}: bad pixel", ctx(i + 1)))?;
        rows.push((label, px));
    }
    let run = run.ok_or_else(|| anyhow!("{}: missing `# run:` header", path.display()))?;
    Ok(Images { run, rows })
}

pub struct AttackArgs<'a> {
    pub traces: &'a Path,
    pub images: &'a Path,
    pub manifest: &'a Path,
    pub k: usize,
    pub model: Option<&'a Path>,
    pub window: Option<&'a str>,
    pub out: Option<&'a Path>,
}

pub fn attack(a: AttackArgs<'_>) -> Result<u8> {
    let man = Manifest::load(a.manifest)?;
    let hash = man.require("hash")?;
    let images = read_images(a.images)?;
    if images.run != hash {
        bail!(
            "provenance mismatch: {} belongs to run {}, the manifest to run {hash}",
            a.images.display(),
            images.run
        );
    }
    let model_path = match a.model {
        Some(p) => p.to_path_buf(),
        None => man
            .path_of("model_file")
            .context("this run has no model to attack")?,
    };
    let (model, text) = load_model(&model_path)?;
    if sha256_hex(text.as_bytes()) != man.require("model_sha256")? {
        bail!(
            "provenance mismatch: {} is not the model of this run",
            model_path.display()
        );
    }
    if a.k == 0 || a.k > model.n_in().min(MAX_ATTACK_WEIGHTS) {
        bail!(
            "k must be in 1..={}, got {}",
            model.n_in().min(MAX_ATTACK_WEIGHTS),
            a.k
        );
    }
    let window = match a.window {
        Some(s) => parse_range(s)?,
        None => {
            let all = man.require("attack_windows")?;
            let w = all
                .split_whitespace()
                .nth(a.k - 1)
                .ok_or_else(|| anyhow!("manifest has no attack window for k = {}", a.k))?;
            parse_range(w)?
        }
    };
    let truth: u32 = (0..a.k)
        .filter(|&i| model.weights[0][0][i])
        .map(|i| 1u32 << i)
        .sum();

    let mut hr = HashingReader::new(open(a.traces)?);
    let mut acc = DpaAccumulator::new(a.k, model.width, window.clone())?;
    {
        let ctx = || format!("reading {}", a.traces.display());
        let mut reader = TraceReader::new(&mut hr).with_context(ctx)?;
        if reader.n_traces != images.rows.len() as u64 {
            bail!(
                "provenance mismatch: {} traces but {} images",
                reader.n_traces,
                images.rows.len()
            );
        }
        for (i, (label, px)) in images.rows.iter().enumerate() {
            let (l, samples) = reader.next_trace().with_context(ctx)?.unwrap();
            if l != *label {
                bail!("provenance mismatch: trace {i} label differs from its image record");
            }
            acc.add(px, &samples)?;
        }
        reader.expect_end().with_context(ctx)?;
    }
    if hr.finish() != man.require("trace_sha256")? {
        bail!(
            "provenance mismatch: {} is not the trace file of this run",
            a.traces.display()
        );
    }
    let report = acc.report(Some(truth));
    let meta = [
        ("k", a.k.to_string()),
        ("window", format_range(&window)),
        ("true_hypothesis", format!("{truth:#b}")),
    ];
    write_attack_csv(csv_out(a.out)?, &report, &meta)?;
    let rank = report.ground_truth_rank.unwrap();
    let msg = format!(
        "true hypothesis {truth:#b} ranks {rank} of {} after {} traces",
        1usize << a.k,
        report.n_traces
    );
    if a.out.is_some() {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
    Ok(if rank == 1 { 1 } else { 0 })
}

pub fn probe_check(gadget: &str, mode: &str, out: Option<&Path>) -> Result<u8> {
    let g: Gadget = gadget.parse().map_err(|e: String| anyhow!(e))?;
    let mode_v: ProbeMode = mode.parse().map_err(|e: String| anyhow!(e))?;
    let f = g.fragment()?;
    let r = f.check(mode_v)?;
    println!(
        "{g} ({mode}): {} variables, {} cycles, {} violating nets",
        r.n_vars,
        r.cycles,
        r.violating.len()
    );
    let mut rows = Vec::new();
    for w in &r.witnesses {
        let arrived: Vec<String> = w.arrived.iter().map(|n| n.to_string()).collect();
        rows.push(format!(
            "{},{},{},{}",
            w.net,
            f.netlist.gate(w.net).kind.name(),
            w.cycle,
            arrived.join(" ")
        ));
    }
    for &n in &r.violating {
        let w = r.witnesses.iter().find(|w| w.net == n).unwrap();
        let arrived: Vec<String> = w.arrived.iter().map(|n| n.to_string()).collect();
        let how = if arrived.is_empty() {
            "settled".to_string()
        } else {
            format!("after [{}] arrived", arrived.join(" "))
        };
        println!(
            "  {n} {} cycle {}: {how}",
            f.netlist.gate(n).kind.name(),
            w.cycle
        );
    }
    if let Some(p) = out {
        let mut w = create(p)?;
        writeln!(w, "# gadget: {g}")?;
        writeln!(w, "# mode: {mode}")?;
        writeln!(w, "net,gate,cycle,arrived")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()?;
    }
    Ok(if r.is_secure() { 0 } else { 1 })
}

pub fn report(manifest: &Path, csvs: &[PathBuf]) -> Result<u8> {
    let m = Manifest::load(manifest)?;
    println!("run {}", m.require("hash")?);
    for (k, v) in m.entries() {
        if k == "hash" || k == "format" || k.ends_with("sha256") {
            continue;
        }
        println!("  {k:<28} {v}");
    }
    for p in csvs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let meta: Vec<(&str, &str)> = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .filter_map(|l| l.split_once(": "))
            .collect();
        let get = |k: &str| meta.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        if let (Some(t), Some(th)) = (get("max_abs_t"), get("threshold")) {
            let (t, th): (f64, f64) = (
                t.parse()
                    .with_context(|| format!("{}: max_abs_t", p.display()))?,
                th.parse()
                    .with_context(|| format!("{}: threshold", p.display()))?,
            );
            let verdict = if t < th { "pass" } else { "leak" };
            println!(
                "{}: order {} window {} max |t| = {t:.3}: {verdict}",
                p.display(),
                get("order").unwrap_or("?"),
                get("window").unwrap_or("?")
            );
        } else if let Some(r) = get("ground_truth_rank") {
            println!(
                "{}: k = {} true hypothesis rank {r} after {} traces",
                p.display(),
                get("k").unwrap_or("?"),
                get("n_traces").unwrap_or("?")
            );
        } else {
            bail!("{}: not a TVLA or attack report", p.display());
        }
    }
    Ok(0)
}
