use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufReader;

use leanstack_core::datagen::{gen_tables, gen_text, open_concatenated, schema, DataKind, TableSpec, TextCorpusSpec};
use leanstack_core::pipeline::{parse_pipeline, run, ExecContext};
use leanstack_core::tukubai::{lcnt, msort, MemoryBudget, SortOptions};
use leanstack_core::{parse_key_spec, Record, RecordReader};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run_text(pipeline: &str, input: Box<dyn std::io::BufRead>) -> String {
    let mut out = Vec::new();
    run(&parse_pipeline(pipeline).unwrap(), input, &mut out, &ExecContext::default()).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn million_records_sort_under_16_mib() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lines: Vec<String> = (0..1_000_000)
        .map(|i| {
            let len = rng.random_range(1..8);
            let k: String = (0..len).map(|_| rng.random_range(b'a'..=b'f') as char).collect();
            format!("{k} {i:08}")
        })
        .collect();
    let scratch = tempfile::tempdir().unwrap();
    let opts = SortOptions::default()
        .with_budget(MemoryBudget::new(16 << 20).unwrap())
        .with_scratch_dir(scratch.path());
    let input = lines.iter().map(|l| Record::parse(l));
    let sorted = msort(input, parse_key_spec("key=1").unwrap(), &opts).unwrap();
    assert!(sorted.spilled_runs() > 1);
    let got: Vec<String> = sorted.map(|r| r.unwrap().into_string()).collect();

    let mut want = lines.clone();
    want.sort_by(|a, b| a.split(' ').next().cmp(&b.split(' ').next()));
    assert!(got == want);
}

#[test]
fn counts_match_generation_time_records() {
    let dir = tempfile::tempdir().unwrap();
    gen_text(&TextCorpusSpec::new(300_000, 8).with_file_bytes(100_000), dir.path()).unwrap();
    let m = gen_tables(&TableSpec::new(200_000, 8), dir.path()).unwrap();
    assert_eq!(m.entries.len(), 3 + 8);
    for e in &m.entries {
        let f = fs::File::open(m.path_of(e)).unwrap();
        assert_eq!(lcnt(RecordReader::new(BufReader::new(f))).unwrap(), e.records, "{}", e.path);
        assert_eq!(fs::metadata(m.path_of(e)).unwrap().len(), e.bytes);
    }
}

#[test]
fn word_frequencies_of_a_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_text(&TextCorpusSpec::new(400_000, 21).with_file_bytes(150_000), dir.path()).unwrap();
    let got = run_text(
        "tokenize | msort key=1 | count 1 1 | sm2 1 1 2 2",
        open_concatenated(&m, DataKind::Text).unwrap(),
    );
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for e in &m.entries {
        for w in fs::read_to_string(m.path_of(e)).unwrap().split_whitespace() {
            *counts.entry(w.to_string()).or_default() += 1;
        }
    }
    let want: String = counts.iter().map(|(w, n)| format!("{w} {n}\n")).collect();
    assert_eq!(got, want);
}

fn cents(price: &str) -> i64 {
    let (whole, frac) = price.split_once('.').unwrap();
    whole.parse::<i64>().unwrap() * 100 + frac.parse::<i64>().unwrap()
}

#[test]
fn select_and_join_on_generated_tables() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_tables(&TableSpec::new(300_000, 13), dir.path()).unwrap();
    let read = |kind| -> Vec<String> {
        m.of_kind(kind)
            .flat_map(|e| fs::read_to_string(m.path_of(e)).unwrap().lines().map(String::from).collect::<Vec<_>>())
            .collect()
    };
    let items = read(DataKind::Item);
    let orders = read(DataKind::Order);

    let got = run_text(
        &format!("select {} 5000.00", schema::ITEM_PRICE),
        open_concatenated(&m, DataKind::Item).unwrap(),
    );
    let want: String = items
        .iter()
        .filter(|l| cents(l.split(' ').nth(schema::ITEM_PRICE - 1).unwrap()) > 500_000)
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(got, want);

    // Hash-join reference.
    let sorted_orders = dir.path().join("orders.sorted");
    fs::write(
        &sorted_orders,
        run_text(
            &format!("msort key={}", schema::ORDER_ITEM_ID),
            open_concatenated(&m, DataKind::Order).unwrap(),
        ),
    )
    .unwrap();
    let got = run_text(
        &format!(
            "msort key={} | join {} key={} key={}",
            schema::ITEM_ID,
            sorted_orders.display(),
            schema::ITEM_ID,
            schema::ORDER_ITEM_ID
        ),
        open_concatenated(&m, DataKind::Item).unwrap(),
    );
    let mut by_item: HashMap<&str, Vec<String>> = HashMap::new();
    for o in &orders {
        let f: Vec<&str> = o.split(' ').collect();
        let rest: Vec<&str> = f.iter().enumerate().filter(|&(i, _)| i != schema::ORDER_ITEM_ID - 1).map(|(_, s)| *s).collect();
        by_item.entry(f[schema::ORDER_ITEM_ID - 1]).or_default().push(rest.join(" "));
    }
    let mut want: Vec<String> = Vec::new();
    for i in &items {
        let id = i.split(' ').next().unwrap();
        for rest in by_item.get(id).into_iter().flatten() {
            want.push(format!("{i} {rest}"));
        }
    }
    let mut got: Vec<&str> = got.lines().collect();
    got.sort_unstable();
    want.sort_unstable();
    assert!(!want.is_empty());
    assert_eq!(got, want);
}
