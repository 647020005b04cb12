//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fail. Extra arguments select criteria by substring.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use leanstack_bench::report::{read_report, save_report};
use leanstack_bench::run::{load, run_workload, Executor, RunOptions};
use leanstack_bench::{digest_file, validate, verify_agreement, OrderSensitivity, Workload, WorkloadKind};
use leanstack_cluster::{Cluster, ClusterTopology, DaemonHandle, JobId, JobStore, WorkerDaemon};
use leanstack_core::datagen::{
    gen_tables, gen_text, DataKind, Manifest, ManifestEntry, TableSpec, TextCorpusSpec,
};
use leanstack_core::pipeline::{self, ExecContext, Stage};
use leanstack_core::tukubai::{dmerge, msort, MemoryBudget, SortOptions};
use leanstack_core::{KeyRange, Record, RecordReader};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const MIB: u64 = 1 << 20;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if let false = $cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Workers {
    _daemons: Vec<DaemonHandle>,
    _roots: Vec<TempDir>,
    cluster: Cluster,
}

fn workers(n: usize) -> Workers {
    let mut daemons = Vec::new();
    let mut roots = Vec::new();
    for _ in 0..n {
        let root = tempfile::tempdir().unwrap();
        let d = WorkerDaemon::bind("127.0.0.1:0", JobStore::open(root.path()).unwrap()).unwrap();
        daemons.push(d.spawn());
        roots.push(root);
    }
    let topo = ClusterTopology::new(daemons.iter().map(|d| d.addr().to_string()).collect()).unwrap();
    Workers {
        cluster: Cluster::new(&topo).unwrap(),
        _daemons: daemons,
        _roots: roots,
    }
}

fn sha(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// A 258 MiB text corpus in 16 MiB files, shared by the sort and rate checks.
fn big_corpus() -> &'static (TempDir, Manifest) {
    static CORPUS: OnceLock<(TempDir, Manifest)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let spec = TextCorpusSpec::new(258 * MIB, 2024).with_file_bytes(16 * MIB);
        gen_text(&spec, dir.path()).unwrap();
        let m = Manifest::read(dir.path()).unwrap();
        (dir, m)
    })
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let ws = workers(3);
    let mut runs = 0;
    for seed in 0..10u64 {
        let dir = tempfile::tempdir().map_err(err)?;
        let data_dir = dir.path().join("data");
        // 100 MB split evenly between the text corpus and the two tables.
        gen_text(&TextCorpusSpec::new(50_000_000, seed).with_file_bytes(5 * MIB), &data_dir).map_err(err)?;
        gen_tables(&TableSpec::new(50_000_000, seed), &data_dir).map_err(err)?;
        let manifest = Manifest::read(&data_dir).map_err(err)?;
        let data = load(&ws.cluster, &manifest, &[DataKind::Text, DataKind::Item, DataKind::Order]).map_err(err)?;
        let mut opts = RunOptions::new(dir.path().join("work"));
        opts.repetitions = 1;
        for kind in WorkloadKind::ALL {
            let w = Workload::new(kind);
            let a = dir.path().join(format!("{kind}.oracle"));
            let b = dir.path().join(format!("{kind}.distributed"));
            run_workload(&w, &manifest, &Executor::Oracle, &a, &opts).map_err(err)?;
            let exec = Executor::Distributed {
                cluster: &ws.cluster,
                data: &data,
            };
            run_workload(&w, &manifest, &exec, &b, &opts).map_err(err)?;
            let outs = [("oracle".to_string(), a), ("distributed".to_string(), b)];
            let agreement = verify_agreement(&outs, w.order_sensitivity()).map_err(err)?;
            ensure!(agreement.agree, "seed {seed}: {kind} disagrees: {:?}", agreement.digests);
            runs += 1;
        }
        ws.cluster.delete_job(&data.job).map_err(err)?;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(600), "took {:.0}s, limit 600s", elapsed.as_secs_f64());
    Ok(format!("{runs}/60 workload runs agree over 3 workers in {:.0}s", elapsed.as_secs_f64()))
}

fn sort_beyond_memory() -> Outcome {
    let (dir, corpus) = big_corpus();
    let tokens = dir.path().join("tokens");
    {
        let mut out = BufWriter::new(File::create(&tokens).map_err(err)?);
        let input = leanstack_core::datagen::open_concatenated(corpus, DataKind::Text).map_err(err)?;
        let ctx = ExecContext {
            sort: SortOptions::default(),
            base_dir: None,
        };
        pipeline::run(&[Stage::Tokenize], input, &mut out, &ctx).map_err(err)?;
        out.flush().map_err(err)?;
    }
    let size = fs::metadata(&tokens).map_err(err)?.len();
    ensure!(size >= 256 * MIB, "tokenized corpus is only {size} bytes");

    let budget = MemoryBudget::new(16 * MIB as usize).map_err(err)?;
    let scratch = tempfile::tempdir().map_err(err)?;
    let opts = SortOptions::default().with_budget(budget).with_scratch_dir(scratch.path());
    let sorted = dir.path().join("tokens.sorted");
    {
        let input = RecordReader::new(BufReader::new(File::open(&tokens).map_err(err)?));
        let mut out = BufWriter::new(File::create(&sorted).map_err(err)?);
        let key = KeyRange::column(1).map_err(err)?;
        leanstack_core::record::write_records(msort(input, key, &opts).map_err(err)?, &mut out).map_err(err)?;
        out.flush().map_err(err)?;
    }

    // Reference: every line in memory, sorted bytewise.
    let data = fs::read(&tokens).map_err(err)?;
    let mut lines: Vec<&[u8]> = data.strip_suffix(b"\n").unwrap_or(&data).split(|&b| b == b'\n').collect();
    lines.sort();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l);
        h.update(b"\n");
    }
    let want = hex::encode(h.finalize());
    drop(lines);
    let mut got = Vec::new();
    File::open(&sorted).map_err(err)?.read_to_end(&mut got).map_err(err)?;
    ensure!(sha(&got) == want, "budgeted sort differs from the in-memory sort");
    let _ = fs::remove_file(&sorted);
    let _ = fs::remove_file(&tokens);
    Ok(format!("{} MiB sorted under a 16 MiB budget, byte-identical", size / MIB))
}

fn write_manifest(dir: &Path, files: &[(&str, &[String])]) -> Manifest {
    let mut entries = Vec::new();
    for (name, rows) in files {
        let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
        fs::write(dir.join(name), &text).unwrap();
        entries.push(ManifestEntry {
            path: name.to_string(),
            bytes: text.len() as u64,
            records: rows.len() as u64,
        });
    }
    let m = Manifest {
        root: dir.to_path_buf(),
        entries,
    };
    m.write().unwrap();
    m
}

fn join_colocation() -> Outcome {
    let ws = workers(4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = Vec::new();
    for &(n_items, n_orders) in &[(100usize, 1_000usize), (5_000, 20_000), (100_000, 100_000)] {
        let dir = tempfile::tempdir().map_err(err)?;
        let key_space = n_items as u32 + n_items as u32 / 10;
        let mut item_ids: Vec<u32> = (0..key_space).collect();
        item_ids.shuffle(&mut rng);
        item_ids.truncate(n_items);
        // Items in ascending key order land key ranges on successive workers;
        // orders in descending order put each key's orders on the mirror worker.
        item_ids.sort_unstable();
        let items: Vec<String> = item_ids.iter().map(|id| format!("{id:010} c{:03} {:04}.00", id % 100, id % 9000)).collect();
        let mut order_keys: Vec<u32> = (0..n_orders).map(|_| rng.random_range(0..key_space)).collect();
        order_keys.sort_unstable_by(|a, b| b.cmp(a));
        let orders: Vec<String> = order_keys
            .iter()
            .enumerate()
            .map(|(i, k)| format!("{i:012} {k:010} {:08} {:03}", i % 977, i % 7 + 1))
            .collect();
        let manifest = write_manifest(dir.path(), &[("item-00000.dat", &items), ("order-00000.dat", &orders)]);
        let data = load(&ws.cluster, &manifest, &[DataKind::Item, DataKind::Order]).map_err(err)?;

        // How many matching pairs start out on the same worker.
        let mut colocated = 0u64;
        for p in ws.cluster.participants() {
            let read = |path: &str| -> Result<Vec<u32>, String> {
                let mut s = String::new();
                p.node.open(&data.job, path).map_err(err)?.read_to_string(&mut s).map_err(err)?;
                Ok(s.lines().map(|l| l.split(' ').nth(if path.contains("item") { 0 } else { 1 }).unwrap().parse().unwrap()).collect())
            };
            let local_items: std::collections::HashSet<u32> = read("data/item-00000.dat")?.into_iter().collect();
            colocated += read("data/order-00000.dat")?.iter().filter(|k| local_items.contains(k)).count() as u64;
        }

        let w = Workload::new(WorkloadKind::Join);
        let got = dir.path().join("join.out");
        let exec = Executor::Distributed {
            cluster: &ws.cluster,
            data: &data,
        };
        let mut opts = RunOptions::new(dir.path().join("work"));
        opts.repetitions = 1;
        run_workload(&w, &manifest, &exec, &got, &opts).map_err(err)?;
        ws.cluster.delete_job(&data.job).map_err(err)?;

        // Nested-loop reference.
        let mut want = Vec::new();
        for (item, id) in items.iter().zip(&item_ids) {
            for (order, k) in orders.iter().zip(&order_keys) {
                if k == id {
                    let rest: Vec<&str> = order.split(' ').enumerate().filter(|&(i, _)| i != 1).map(|(_, f)| f).collect();
                    want.push(format!("{item} {}", rest.join(" ")));
                }
            }
        }
        let mut got_lines: Vec<String> = fs::read_to_string(&got).map_err(err)?.lines().map(String::from).collect();
        got_lines.sort();
        want.sort();
        ensure!(
            got_lines == want,
            "{n_items}x{n_orders}: {} joined rows, nested loop gives {}",
            got_lines.len(),
            want.len()
        );
        checked.push(format!("{n_items}x{n_orders} ({} rows, {colocated} colocated at start)", want.len()));
    }
    Ok(checked.join(", "))
}

fn random_runs(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<String>> {
    let alphabet = rng.random_range(2..12u8);
    (0..k)
        .map(|_| {
            let n = rng.random_range(0..40);
            let mut rows: Vec<String> = (0..n)
                .map(|_| {
                    let len = rng.random_range(1..4);
                    let key: String = (0..len).map(|_| (b'a' + rng.random_range(0..alphabet)) as char).collect();
                    format!("{key} {}", rng.random_range(0..1000))
                })
                .collect();
            // Stable sort on the first field only, so payloads keep their order.
            rows.sort_by(|a, b| a.split(' ').next().cmp(&b.split(' ').next()));
            rows
        })
        .collect()
}

fn records(rows: &[String]) -> impl Iterator<Item = leanstack_core::Result<Record>> + '_ {
    rows.iter().map(|r| Record::parse(r))
}

fn render(it: impl Iterator<Item = leanstack_core::Result<Record>>) -> Result<String, String> {
    let mut out = Vec::new();
    leanstack_core::record::write_records(it, &mut out).map_err(err)?;
    String::from_utf8(out).map_err(err)
}

fn merge_law() -> Outcome {
    let clusters: Vec<Workers> = (1..=5).map(workers).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let key = KeyRange::column(1).map_err(err)?;
    let opts = SortOptions::default();
    for case in 0..1000 {
        let k = rng.random_range(1..=5);
        let runs = random_runs(&mut rng, k);
        let merged = render(dmerge(runs.iter().map(|r| records(r)).collect(), key))?;
        let concat: Vec<String> = runs.concat();
        let sorted = render(msort(records(&concat), key, &opts).map_err(err)?)?;
        ensure!(merged == sorted, "case {case}: dmerge of {k} runs differs from msort");

        let ws = &clusters[k - 1];
        let job = JobId::generate();
        for (p, run) in ws.cluster.participants().iter().zip(&runs) {
            let text: String = run.iter().map(|r| format!("{r}\n")).collect();
            p.node.put(&job, "runs/sorted", &mut text.as_bytes()).map_err(err)?;
        }
        let remote: Vec<Vec<String>> = ws
            .cluster
            .participants()
            .iter()
            .map(|p| {
                let mut s = String::new();
                p.node.open(&job, "runs/sorted").unwrap().read_to_string(&mut s).unwrap();
                s.lines().map(String::from).collect()
            })
            .collect();
        let gathered = render(dmerge(remote.iter().map(|r| records(r)).collect(), key))?;
        let distributed = render(
            ws.cluster
                .distr_dmerge(&job, key, "runs/sorted")
                .map_err(err)?
                .map(|r| r.map_err(|e| leanstack_core::Error::Io(std::io::Error::other(e)))),
        )?;
        ws.cluster.delete_job(&job).map_err(err)?;
        ensure!(distributed == gathered, "case {case}: distr_dmerge over {k} workers differs");
        ensure!(distributed == merged, "case {case}: distributed merge differs from local merge");
    }
    Ok("1000 cases, k in 1..=5".into())
}

fn scatter_gather_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir = tempfile::tempdir().map_err(err)?;
    let mut files = 0;
    for n in 1..=8usize {
        let ws = workers(n);
        for size in [0usize, 1, n * 10 + 1, 7919, 65_537, 1_000_003] {
            let mut text = String::with_capacity(size + 20);
            while text.len() < size {
                let w = rng.random_range(1..30);
                text.extend((0..w).map(|_| (b'a' + rng.random_range(0..26u8)) as char));
                text.push('\n');
            }
            let src = dir.path().join("src");
            fs::write(&src, &text).map_err(err)?;
            let job = JobId::generate();
            ws.cluster.distr_distr(&job, &src, "part").map_err(err)?;
            let back = dir.path().join("back");
            ws.cluster.gather(&job, "part", &back).map_err(err)?;
            ws.cluster.delete_job(&job).map_err(err)?;
            ensure!(
                digest_file(&src, OrderSensitivity::Deterministic).map_err(err)?
                    == digest_file(&back, OrderSensitivity::Deterministic).map_err(err)?,
                "{n} workers, {} bytes: gathered file differs",
                text.len()
            );
            files += 1;
        }
    }
    Ok(format!("{files} files over 1..=8 workers reproduced exactly"))
}

fn generator_shape() -> Outcome {
    let mut notes = Vec::new();
    for (volume, seed) in [(200_000u64, 1u64), (3_000_000, 2), (20_000_000, 3)] {
        let dir = tempfile::tempdir().map_err(err)?;
        gen_tables(&TableSpec::new(volume, seed), dir.path()).map_err(err)?;
        let m = Manifest::read(dir.path()).map_err(err)?;
        let (items, orders) = (m.of_kind(DataKind::Item).count(), m.of_kind(DataKind::Order).count());
        ensure!(items == 4 && orders == 4, "{volume} bytes: {items} item and {orders} order files");
        let (ib, ob) = (m.bytes_of(DataKind::Item) as f64, m.bytes_of(DataKind::Order) as f64);
        let ratio = ib / (ib + ob);
        ensure!((ratio - 0.62).abs() <= 0.03, "{volume} bytes: item share {ratio:.3}");
        notes.push(format!("{ratio:.3}"));
    }
    let file_bytes = 50_000;
    let mut counts = Vec::new();
    for k in [1u64, 2, 4, 8] {
        let dir = tempfile::tempdir().map_err(err)?;
        gen_text(&TextCorpusSpec::new(k * 400_000, k).with_file_bytes(file_bytes), dir.path()).map_err(err)?;
        counts.push(Manifest::read(dir.path()).map_err(err)?.of_kind(DataKind::Text).count());
    }
    ensure!(
        counts.iter().zip([1, 2, 4, 8]).all(|(&c, k)| c == 8 * k),
        "text file counts {counts:?} are not proportional to volume"
    );
    Ok(format!("item share {} with 4+4 files; text files {counts:?}", notes.join("/")))
}

fn statistics() -> Outcome {
    let v = validate(&[10.0, 12.0, 14.0], 0.95).map_err(err)?;
    ensure!(v.mean == 12.0, "mean {}", v.mean);
    // t(0.975, 2) = 4.303, s = 2.
    let want = 4.303 * 2.0 / 3f64.sqrt();
    ensure!((v.half_width() - 4.97).abs() <= 0.01, "half-width {}", v.half_width());
    ensure!((v.half_width() - want).abs() <= 1e-3, "half-width {} vs table {want}", v.half_width());
    let z = validate(&[3.5, 3.5, 3.5, 3.5], 0.95).map_err(err)?;
    ensure!(z.ci_low == z.ci_high && z.half_width() == 0.0, "zero variance gave {z:?}");
    Ok(format!("mean {}, half-width {:.4}", v.mean, v.half_width()))
}

fn rate_trend() -> Outcome {
    let (dir, corpus) = big_corpus();
    let w = Workload::new(WorkloadKind::Grep);
    let mut reports = Vec::new();
    let mut want_bytes = HashMap::new();
    for tier in [16u64, 64, 256] {
        let files = (tier / 16) as usize;
        let entries: Vec<ManifestEntry> = corpus.of_kind(DataKind::Text).take(files).cloned().collect();
        let bytes: u64 = entries.iter().map(|e| e.bytes).sum();
        ensure!(entries.len() == files, "corpus has too few files for the {tier} MB tier");
        let m = Manifest {
            root: corpus.root.clone(),
            entries,
        };
        let mut opts = RunOptions::new(dir.path().join("work"));
        opts.repetitions = 3;
        let out = dir.path().join(format!("grep-{tier}"));
        reports.push(run_workload(&w, &m, &Executor::Oracle, &out, &opts).map_err(err)?);
        want_bytes.insert(bytes, tier);
    }
    let path: PathBuf = dir.path().join("report.txt");
    save_report(&reports, &path).map_err(err)?;
    let rows = read_report(&path).map_err(err)?;
    ensure!(rows.len() == 9, "report has {} rows", rows.len());
    let mut rates = Vec::new();
    for row in &rows {
        ensure!(want_bytes.contains_key(&row.bytes), "row for unexpected volume {}", row.bytes);
        ensure!(
            (row.rate * row.seconds).round() == row.bytes as f64,
            "rate {} x {}s != {} bytes",
            row.rate,
            row.seconds,
            row.bytes
        );
        rates.push(format!("{:.0}", row.rate / MIB as f64));
    }
    Ok(format!("9 rows over 3 tiers, rates MiB/s {}", rates.join(",")))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("sort beyond memory", sort_beyond_memory),
        ("join colocation", join_colocation),
        ("merge law", merge_law),
        ("scatter/gather identity", scatter_gather_identity),
        ("generator shape", generator_shape),
        ("statistics", statistics),
        ("rate trend", rate_trend),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
