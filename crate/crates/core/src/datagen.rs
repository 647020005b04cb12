//! Deterministic synthetic datasets.
//!
//! Two layouts are produced. Unstructured text is split into many files of
//! a fixed target size, so the file count grows with volume. Structured
//! item/order tables are split into a fixed number of files per table, so
//! the file size grows with volume instead.
//!
//! Every file's bytes depend only on the seed and the file index.
//!
//! Table schemas (single-space separated, fixed width, zero padded):
//!
//! ```text
//! item:  item_id(10) category(c + 3 digits) price(dddd.cc) stock(5)
//! order: order_id(12) item_id(10) customer_id(8) quantity(3) total(ddddddd.cc)
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::record::{Record, RecordReader};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const DEFAULT_TEXT_FILE_BYTES: u64 = 5 * 1024 * 1024;
pub const DEFAULT_VOCABULARY: usize = 20_000;
pub const DEFAULT_ZIPF_EXPONENT: f64 = 1.1;
pub const DEFAULT_FILES_PER_TABLE: usize = 4;
pub const DEFAULT_ITEM_FRACTION: f64 = 0.62;
pub const DEFAULT_CATEGORIES: u32 = 100;

/// 1-based column positions of the generated tables.
pub mod schema {
    pub const ITEM_ID: usize = 1;
    pub const ITEM_CATEGORY: usize = 2;
    pub const ITEM_PRICE: usize = 3;
    pub const ITEM_STOCK: usize = 4;
    pub const ORDER_ID: usize = 1;
    pub const ORDER_ITEM_ID: usize = 2;
    pub const ORDER_CUSTOMER: usize = 3;
    pub const ORDER_QUANTITY: usize = 4;
    pub const ORDER_TOTAL: usize = 5;

    pub const ITEM_ROW_BYTES: u64 = 30;
    pub const ORDER_ROW_BYTES: u64 = 48;
}

#[derive(Clone, Debug)]
pub struct TextCorpusSpec {
    pub total_bytes: u64,
    pub target_file_bytes: u64,
    pub vocabulary: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl TextCorpusSpec {
    pub fn new(total_bytes: u64, seed: u64) -> Self {
        TextCorpusSpec {
            total_bytes,
            target_file_bytes: DEFAULT_TEXT_FILE_BYTES.min(total_bytes.max(1)),
            vocabulary: DEFAULT_VOCABULARY,
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
            seed,
        }
    }

    pub fn with_file_bytes(mut self, bytes: u64) -> Self {
        self.target_file_bytes = bytes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("text corpus: {m}")));
        if self.target_file_bytes == 0 {
            return bad("target file size must be positive");
        }
        if self.total_bytes < self.target_file_bytes {
            return bad("total size is below the target file size");
        }
        if self.vocabulary < 2 {
            return bad("vocabulary needs at least two words");
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent > 0.0) {
            return bad("zipf exponent must be positive");
        }
        Ok(())
    }

    pub fn file_count(&self) -> u64 {
        self.total_bytes.div_ceil(self.target_file_bytes)
    }
}

#[derive(Clone, Debug)]
pub struct TableSpec {
    pub total_bytes: u64,
    pub files_per_table: usize,
    pub item_fraction: f64,
    pub categories: u32,
    pub seed: u64,
}

impl TableSpec {
    pub fn new(total_bytes: u64, seed: u64) -> Self {
        TableSpec {
            total_bytes,
            files_per_table: DEFAULT_FILES_PER_TABLE,
            item_fraction: DEFAULT_ITEM_FRACTION,
            categories: DEFAULT_CATEGORIES,
            seed,
        }
    }

    pub fn with_files_per_table(mut self, files: usize) -> Self {
        self.files_per_table = files;
        self
    }

    fn item_rows(&self) -> u64 {
        let item_bytes = (self.total_bytes as f64 * self.item_fraction).round() as u64;
        item_bytes / schema::ITEM_ROW_BYTES
    }

    fn order_rows(&self) -> u64 {
        let item_bytes = (self.total_bytes as f64 * self.item_fraction).round() as u64;
        (self.total_bytes - item_bytes) / schema::ORDER_ROW_BYTES
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("tables: {m}")));
        if self.files_per_table == 0 {
            return bad("need at least one file per table");
        }
        if !(self.item_fraction > 0.0 && self.item_fraction < 1.0) {
            return bad("item fraction must be in (0, 1)");
        }
        if self.categories == 0 || self.categories > 1000 {
            return bad("categories must be in 1..=1000");
        }
        if self.item_rows() < self.files_per_table as u64 {
            return bad("volume too small for one item row per file");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// File name relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub records: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Text,
    Item,
    Order,
}

impl DataKind {
    fn prefix(self) -> &'static str {
        match self {
            DataKind::Text => "text-",
            DataKind::Item => "item-",
            DataKind::Order => "order-",
        }
    }
}

impl ManifestEntry {
    pub fn kind(&self) -> Option<DataKind> {
        [DataKind::Text, DataKind::Item, DataKind::Order]
            .into_iter()
            .find(|k| self.path.starts_with(k.prefix()))
    }
}

/// The list of generated files, stored as a record file of
/// `path bytes records` rows next to the data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads a manifest given its file or the dataset directory holding it.
    pub fn read(path: &Path) -> Result<Manifest> {
        let file;
        let path = if path.is_dir() {
            file = path.join(MANIFEST_FILE);
            &file
        } else {
            path
        };
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut entries = Vec::new();
        for r in RecordReader::new(BufReader::new(File::open(path)?)) {
            let r = r?;
            let f: Vec<&str> = r.fields().collect();
            let (path, bytes, records) = match f.as_slice() {
                [p, b, n] => (p, b.parse(), n.parse()),
                _ => return Err(Error::InvalidRecord("manifest rows are `path bytes records`")),
            };
            match (bytes, records) {
                (Ok(bytes), Ok(records)) => entries.push(ManifestEntry {
                    path: path.to_string(),
                    bytes,
                    records,
                }),
                _ => return Err(Error::InvalidRecord("manifest sizes must be integers")),
            }
        }
        Ok(Manifest { root, entries })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.manifest_path();
        let mut w = BufWriter::new(File::create(&path)?);
        for e in &self.entries {
            let r = Record::from_fields([e.path.clone(), e.bytes.to_string(), e.records.to_string()])?;
            r.write_to(&mut w)?;
        }
        w.flush()?;
        Ok(path)
    }

    /// Adds entries, replacing any with the same path, then rewrites the
    /// manifest file.
    fn merge_into_dir(root: &Path, new: Vec<ManifestEntry>) -> Result<Manifest> {
        let existing = root.join(MANIFEST_FILE);
        let mut m = if existing.exists() {
            Manifest::read(&existing)?
        } else {
            Manifest {
                root: root.to_path_buf(),
                entries: Vec::new(),
            }
        };
        m.entries.retain(|e| !new.iter().any(|n| n.path == e.path));
        m.entries.extend(new);
        m.entries.sort_by(|a, b| a.path.cmp(&b.path));
        m.write()?;
        Ok(m)
    }

    pub fn of_kind(&self, kind: DataKind) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.kind() == Some(kind))
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn bytes_of(&self, kind: DataKind) -> u64 {
        self.of_kind(kind).map(|e| e.bytes).sum()
    }
}

/// SplitMix64 finalizer, used to derive independent per-file seeds and
/// per-item attributes.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

/// The word of frequency rank `rank` (0 = most frequent). Words are
/// consonant-vowel syllable strings, unique per rank, shortest first.
pub fn vocabulary_word(rank: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    // Bijective numeration offset past the one-syllable words.
    let mut n = rank + base + 1;
    let mut syllables = Vec::new();
    while n > 0 {
        let digit = (n - 1) % base;
        syllables.push([CONSONANTS[digit / VOWELS.len()], VOWELS[digit % VOWELS.len()]]);
        n = (n - 1) / base;
    }
    syllables.iter().rev().flatten().map(|&b| b as char).collect()
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(data)?;
    f.flush()?;
    Ok(())
}

/// Splits `total` into `parts` sizes that differ by at most one.
fn even_split(total: u64, parts: u64, index: u64) -> u64 {
    total / parts + u64::from(index < total % parts)
}

fn text_file(spec: &TextCorpusSpec, words: &[String], index: u64, target: u64) -> Result<(Vec<u8>, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x7465_7874_0000_0000 | index));
    let zipf = Zipf::new(spec.vocabulary as f64, spec.zipf_exponent)
        .map_err(|e| Error::InvalidArgument(format!("zipf: {e}")))?;
    let target = target as usize;
    let mut buf = Vec::with_capacity(target);
    let mut lines = 0;
    'file: loop {
        let per_line = rng.random_range(6..=14);
        for j in 0..per_line {
            let rank = zipf.sample(&mut rng) as usize - 1;
            let w = words[rank.min(words.len() - 1)].as_bytes();
            // The line's newline is reserved when its first word is placed.
            let need = w.len() + 1;
            if buf.len() + need > target {
                if j > 0 {
                    buf.push(b'\n');
                    lines += 1;
                }
                break 'file;
            }
            if j > 0 {
                buf.push(b' ');
            }
            buf.extend_from_slice(w);
        }
        buf.push(b'\n');
        lines += 1;
    }
    Ok((buf, lines))
}

/// Writes `⌈total / target⌉` text files of Zipf-distributed words.
pub fn gen_text(spec: &TextCorpusSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let words: Vec<String> = (0..spec.vocabulary).map(vocabulary_word).collect();
    let files = spec.file_count();
    let mut entries = Vec::with_capacity(files as usize);
    for i in 0..files {
        let (data, lines) = text_file(spec, &words, i, even_split(spec.total_bytes, files, i))?;
        let name = format!("text-{i:05}.txt");
        write_file(&out_dir.join(&name), &data)?;
        entries.push(ManifestEntry {
            path: name,
            bytes: data.len() as u64,
            records: lines,
        });
    }
    Manifest::merge_into_dir(out_dir, entries)
}

struct Item {
    category: u32,
    price_cents: u64,
    stock: u64,
}

fn item(spec: &TableSpec, id: u64) -> Item {
    let h = mix(spec.seed, id);
    Item {
        category: (h % u64::from(spec.categories)) as u32,
        price_cents: (h >> 12) % 1_000_000,
        stock: (h >> 40) % 100_000,
    }
}

fn item_row(spec: &TableSpec, id: u64, out: &mut Vec<u8>) {
    let it = item(spec, id);
    writeln!(
        out,
        "{:010} c{:03} {:04}.{:02} {:05}",
        id,
        it.category,
        it.price_cents / 100,
        it.price_cents % 100,
        it.stock
    )
    .unwrap();
}

/// Writes the item and order tables, `files_per_table` files each.
pub fn gen_tables(spec: &TableSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let files = spec.files_per_table as u64;
    let (items, orders) = (spec.item_rows(), spec.order_rows());
    let mut entries = Vec::new();

    let mut first = 0;
    for f in 0..files {
        let n = even_split(items, files, f);
        let mut buf = Vec::with_capacity((n * schema::ITEM_ROW_BYTES) as usize);
        for id in first..first + n {
            item_row(spec, id, &mut buf);
        }
        first += n;
        let name = format!("item-{f:04}.txt");
        write_file(&out_dir.join(&name), &buf)?;
        entries.push(ManifestEntry {
            path: name,
            bytes: buf.len() as u64,
            records: n,
        });
    }

    let mut first = 0;
    for f in 0..files {
        let n = even_split(orders, files, f);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x6f72_6465_0000_0000 | f));
        let mut buf = Vec::with_capacity((n * schema::ORDER_ROW_BYTES) as usize);
        for order_id in first..first + n {
            let item_id = rng.random_range(0..items);
            let customer = rng.random_range(0..100_000_000u64);
            let quantity = rng.random_range(1..=100u64);
            let total = item(spec, item_id).price_cents * quantity;
            writeln!(
                buf,
                "{:012} {:010} {:08} {:03} {:07}.{:02}",
                order_id,
                item_id,
                customer,
                quantity,
                total / 100,
                total % 100
            )
            .unwrap();
        }
        first += n;
        let name = format!("order-{f:04}.txt");
        write_file(&out_dir.join(&name), &buf)?;
        entries.push(ManifestEntry {
            path: name,
            bytes: buf.len() as u64,
            records: n,
        });
    }
    Manifest::merge_into_dir(out_dir, entries)
}

/// Reads every file of one kind, in manifest order, as one byte stream.
pub fn open_concatenated(manifest: &Manifest, kind: DataKind) -> Result<Box<dyn BufRead + Send>> {
    let mut reader: Box<dyn std::io::Read + Send> = Box::new(std::io::empty());
    for e in manifest.of_kind(kind) {
        let f = File::open(manifest.path_of(e))?;
        reader = Box::new(std::io::Read::chain(reader, f));
    }
    Ok(Box::new(BufReader::with_capacity(256 * 1024, reader)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn vocabulary_words_are_unique_and_grow() {
        let words: Vec<String> = (0..20_000).map(vocabulary_word).collect();
        let set: HashSet<&String> = words.iter().collect();
        assert_eq!(set.len(), words.len());
        assert_eq!(words[0].len(), 4);
        assert!(words.windows(2).all(|w| w[0].len() <= w[1].len()));
    }

    #[test]
    fn text_file_count_and_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TextCorpusSpec::new(1_000_000, 7).with_file_bytes(50_000);
        let m = gen_text(&spec, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 20);
        let total: u64 = m.entries.iter().map(|e| e.bytes).sum();
        assert!((total as f64 - 1e6).abs() / 1e6 <= 0.02, "{total}");
        for e in &m.entries {
            assert!((e.bytes as f64 - 50_000.0).abs() / 50_000.0 <= 0.10);
            let data = fs::read(m.path_of(e)).unwrap();
            assert_eq!(data.len() as u64, e.bytes);
            assert_eq!(memchr::memchr_iter(b'\n', &data).count() as u64, e.records);
            let text = String::from_utf8(data).unwrap();
            assert!(text.lines().all(|l| Record::parse(l).is_ok()));
        }
        assert_eq!(Manifest::read(&m.manifest_path()).unwrap(), m);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let spec = TextCorpusSpec::new(200_000, 3).with_file_bytes(40_000);
        gen_text(&spec, a.path()).unwrap();
        gen_text(&spec, b.path()).unwrap();
        gen_text(&TextCorpusSpec { seed: 4, ..spec }, c.path()).unwrap();
        let read = |d: &Path| fs::read(d.join("text-00003.txt")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        assert_ne!(read(a.path()), read(c.path()));

        let tables = TableSpec::new(100_000, 9);
        gen_tables(&tables, a.path()).unwrap();
        gen_tables(&tables, b.path()).unwrap();
        for name in ["item-0002.txt", "order-0001.txt"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
        // Both generators share one manifest.
        let m = Manifest::read(&a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.of_kind(DataKind::Text).count(), 5);
        assert_eq!(m.of_kind(DataKind::Item).count(), 4);
        assert_eq!(m.of_kind(DataKind::Order).count(), 4);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(gen_text(&TextCorpusSpec::new(10, 1).with_file_bytes(20), dir.path()).is_err());
        let mut s = TextCorpusSpec::new(100, 1);
        s.vocabulary = 1;
        assert!(gen_text(&s, dir.path()).is_err());
        let mut t = TableSpec::new(10_000, 1);
        t.item_fraction = 1.0;
        assert!(gen_tables(&t, dir.path()).is_err());
        assert!(gen_tables(&TableSpec::new(10, 1), dir.path()).is_err());
    }

    #[test]
    fn tables_have_schema_and_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_tables(&TableSpec::new(300_000, 5), dir.path()).unwrap();
        let mut ids = HashSet::new();
        for e in m.of_kind(DataKind::Item) {
            for r in RecordReader::new(BufReader::new(File::open(m.path_of(e)).unwrap())) {
                let r = r.unwrap();
                assert_eq!(r.as_str().len() as u64 + 1, schema::ITEM_ROW_BYTES);
                assert!(r.field(schema::ITEM_PRICE).unwrap().parse::<crate::Decimal>().is_ok());
                assert!(ids.insert(r.field(schema::ITEM_ID).unwrap().to_string()));
            }
        }
        // Referential integrity, checked as a brute-force join.
        let mut orders = 0;
        for e in m.of_kind(DataKind::Order) {
            for r in RecordReader::new(BufReader::new(File::open(m.path_of(e)).unwrap())) {
                let r = r.unwrap();
                assert_eq!(r.as_str().len() as u64 + 1, schema::ORDER_ROW_BYTES);
                assert!(ids.contains(r.field(schema::ORDER_ITEM_ID).unwrap()));
                orders += 1;
            }
        }
        assert!(orders > 0);
    }

    #[test]
    fn table_volumes_match_published_split() {
        // A 68-unit dataset had a 43-unit item table and a 26-unit order table.
        let unit = 10_000u64;
        let dir = tempfile::tempdir().unwrap();
        let m = gen_tables(&TableSpec::new(68 * unit, 1), dir.path()).unwrap();
        let item = m.bytes_of(DataKind::Item) as f64 / unit as f64;
        let order = m.bytes_of(DataKind::Order) as f64 / unit as f64;
        assert!((item - 43.0).abs() / 43.0 <= 0.03, "{item}");
        assert!((order - 26.0).abs() / 26.0 <= 0.03, "{order}");
    }

    #[test]
    fn doubling_tables_doubles_file_size_not_count() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let small = gen_tables(&TableSpec::new(400_000, 2), a.path()).unwrap();
        let large = gen_tables(&TableSpec::new(800_000, 2), b.path()).unwrap();
        for kind in [DataKind::Item, DataKind::Order] {
            assert_eq!(small.of_kind(kind).count(), 4);
            assert_eq!(large.of_kind(kind).count(), 4);
            let ratio = large.bytes_of(kind) as f64 / small.bytes_of(kind) as f64;
            assert!((ratio - 2.0).abs() < 0.01, "{ratio}");
        }
    }

    #[test]
    fn text_file_count_is_linear_in_volume() {
        // 8019 GB at about 0.490 GB per file came out as 16380 files.
        let spec = TextCorpusSpec::new(8_019_000, 0).with_file_bytes(490);
        assert!((spec.file_count() as f64 - 16380.0).abs() / 16380.0 < 0.002);
        for k in 1..=4u64 {
            let dir = tempfile::tempdir().unwrap();
            let spec = TextCorpusSpec::new(k * 100_000, 0).with_file_bytes(25_000);
            assert_eq!(gen_text(&spec, dir.path()).unwrap().entries.len() as u64, 4 * k);
        }
    }

    /// Chi-square goodness of fit of the top ranks against the Zipf law,
    /// with a deliberately loose threshold.
    #[test]
    fn word_frequencies_follow_zipf() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = TextCorpusSpec::new(2_000_000, 11).with_file_bytes(500_000);
        spec.vocabulary = 1000;
        let m = gen_text(&spec, dir.path()).unwrap();
        let mut counts: HashMap<String, u64> = HashMap::new();
        for e in &m.entries {
            for w in fs::read_to_string(m.path_of(e)).unwrap().split_whitespace() {
                *counts.entry(w.to_string()).or_default() += 1;
            }
        }
        let n: u64 = counts.values().sum();
        let h: f64 = (1..=spec.vocabulary).map(|k| (k as f64).powf(-spec.zipf_exponent)).sum();
        let top = 50;
        let mut chi2 = 0.0;
        let mut expected_top = 0.0;
        let mut observed_top = 0.0;
        for rank in 0..top {
            let expected = n as f64 * ((rank + 1) as f64).powf(-spec.zipf_exponent) / h;
            let observed = *counts.get(&vocabulary_word(rank)).unwrap_or(&0) as f64;
            chi2 += (observed - expected).powi(2) / expected;
            expected_top += expected;
            observed_top += observed;
        }
        let rest_e = n as f64 - expected_top;
        let rest_o = n as f64 - observed_top;
        chi2 += (rest_o - rest_e).powi(2) / rest_e;
        // 50 degrees of freedom: the 0.999 quantile is about 86.7.
        assert!(chi2 < 150.0, "chi2 = {chi2}");
    }
}
