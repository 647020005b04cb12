//! Leader-side operations over a set of participating nodes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::net::TcpStream;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread;
use std::time::Duration;

use leanstack_core::tukubai::{dmerge, DMerge};
use leanstack_core::{Error as CoreError, KeyRange, Record, RecordReader};

use crate::daemon::encode_exec;
use crate::error::{from_core, ClusterError, Result};
use crate::protocol::{expect_frame, send, DataReader, DataWriter, DeleteBody, Frame, FrameType, Hello, OkBody, PathBody};
use crate::store::{JobId, JobStore, PipelineSpec};
use crate::topology::ClusterTopology;

const STREAM_BUFFER: usize = 64 * 1024;
const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

/// Where a participant's data lives.
#[derive(Clone, Debug)]
pub enum Node {
    /// The leader's own store, used when the leader participates.
    Local(JobStore),
    Remote(String),
}

type Conn = (BufReader<TcpStream>, BufWriter<TcpStream>);

fn connect(endpoint: &str, job: &JobId) -> Result<Conn> {
    let mut last = None;
    for addr in std::net::ToSocketAddrs::to_socket_addrs(endpoint)? {
        match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
            Ok(s) => {
                s.set_nodelay(true)?;
                let r = BufReader::with_capacity(STREAM_BUFFER, s.try_clone()?);
                let mut w = BufWriter::with_capacity(STREAM_BUFFER, s);
                send(&mut w, &Frame::control(FrameType::Hello, &Hello { job: job.to_string() }))?;
                return Ok((r, w));
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.map_or_else(|| ClusterError::Protocol(format!("`{endpoint}` did not resolve")), Into::into))
}

fn expect_ok(r: &mut impl Read) -> Result<OkBody> {
    let f = expect_frame(r)?;
    match f.kind {
        FrameType::Ok => f.body(),
        _ => Err(f.unexpected("OK")),
    }
}

impl Node {
    pub fn put(&self, job: &JobId, path: &str, data: &mut dyn Read) -> Result<u64> {
        match self {
            Node::Local(store) => store.put(job, path, data),
            Node::Remote(ep) => {
                let (mut r, mut w) = connect(ep, job)?;
                send(&mut w, &Frame::control(FrameType::PutChunk, &PathBody { path: path.into() }))?;
                let mut out = DataWriter::new(&mut w);
                let sent = io::copy(data, &mut out).and_then(|_| out.finish().map(|_| ()));
                if let Err(e) = sent {
                    // The daemon may have refused the upload; prefer its reason.
                    let _ = w.get_ref().shutdown(std::net::Shutdown::Write);
                    return Err(match expect_frame(&mut r) {
                        Ok(f) if f.kind == FrameType::Err => f.unexpected("OK"),
                        _ => ClusterError::from_io(e),
                    });
                }
                Ok(expect_ok(&mut r)?.bytes)
            }
        }
    }

    pub fn exec(&self, job: &JobId, spec: &PipelineSpec) -> Result<OkBody> {
        match self {
            Node::Local(store) => store.exec(job, spec),
            Node::Remote(ep) => {
                let (mut r, mut w) = connect(ep, job)?;
                send(&mut w, &Frame::control(FrameType::ExecPipeline, &encode_exec(spec)))?;
                expect_ok(&mut r)
            }
        }
    }

    /// Opens a job file for streaming. Remote errors such as a missing file
    /// surface on the first read.
    pub fn open(&self, job: &JobId, path: &str) -> Result<Box<dyn Read + Send>> {
        match self {
            Node::Local(store) => Ok(Box::new(store.open_file(job, path)?)),
            Node::Remote(ep) => {
                let (r, mut w) = connect(ep, job)?;
                send(&mut w, &Frame::control(FrameType::StreamFile, &PathBody { path: path.into() }))?;
                Ok(Box::new(DataReader::new(r)))
            }
        }
    }

    pub fn delete(&self, job: &JobId, path: Option<&str>) -> Result<()> {
        match self {
            Node::Local(store) => store.delete(job, path),
            Node::Remote(ep) => {
                let (mut r, mut w) = connect(ep, job)?;
                let body = DeleteBody { path: path.map(str::to_string) };
                send(&mut w, &Frame::control(FrameType::DeleteJob, &body))?;
                expect_ok(&mut r).map(|_| ())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Participant {
    pub name: String,
    pub node: Node,
}

/// One chunk placed by [`Cluster::distr_distr`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub node: String,
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug)]
pub struct NodeReport {
    pub node: String,
    pub seconds: f64,
    pub records: u64,
}

pub struct Cluster {
    participants: Vec<Participant>,
}

impl Cluster {
    /// Participants in tie order: the leader first when it participates,
    /// then the workers in config order.
    pub fn new(topo: &ClusterTopology) -> Result<Cluster> {
        if topo.workers.is_empty() {
            return Err(ClusterError::EmptyCluster);
        }
        let mut participants = Vec::new();
        if topo.leader_participates {
            let root = topo
                .leader_root
                .clone()
                .unwrap_or_else(|| std::env::temp_dir().join("leanstack-leader"));
            participants.push(Participant {
                name: "leader".into(),
                node: Node::Local(JobStore::open(root)?),
            });
        }
        participants.extend(topo.workers.iter().enumerate().map(|(i, w)| Participant {
            name: format!("worker {} ({w})", i + 1),
            node: Node::Remote(w.clone()),
        }));
        Ok(Cluster { participants })
    }

    pub fn from_participants(participants: Vec<Participant>) -> Result<Cluster> {
        if participants.is_empty() {
            return Err(ClusterError::EmptyCluster);
        }
        Ok(Cluster { participants })
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    /// Runs `f` on every participant concurrently, returning results in
    /// participant order. Errors are labelled with the participant name.
    fn each<T, F>(&self, f: F) -> Vec<Result<T>>
    where
        T: Send,
        F: Fn(usize, &Participant) -> Result<T> + Sync,
    {
        thread::scope(|s| {
            let handles: Vec<_> = self
                .participants
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let f = &f;
                    s.spawn(move || f(i, p).map_err(|e| e.on(&p.name)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("node thread panicked")).collect()
        })
    }

    fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
        results.into_iter().collect()
    }

    /// Best-effort removal of `path` from every participant.
    fn remove_everywhere(&self, job: &JobId, path: &str) {
        for p in &self.participants {
            if let Err(e) = p.node.delete(job, Some(path)) {
                log::warn!("cleanup of {path} on {}: {e}", p.name);
            }
        }
    }

    /// Splits `file` at record boundaries into one byte-balanced chunk per
    /// participant and stores chunk `i` on participant `i` at `dest`.
    pub fn distr_distr(&self, job: &JobId, file: &Path, dest: &str) -> Result<Vec<Chunk>> {
        let bounds = chunk_bounds(file, self.len())?;
        let results = self.each(|i, p| {
            let (start, end) = (bounds[i], bounds[i + 1]);
            let mut f = File::open(file)?;
            f.seek(SeekFrom::Start(start))?;
            let mut data = BufReader::with_capacity(256 * 1024, f.take(end - start));
            let bytes = p.node.put(job, dest, &mut data)?;
            if bytes != end - start {
                return Err(ClusterError::Protocol(format!("stored {bytes} of {} bytes", end - start)));
            }
            Ok(Chunk {
                node: p.name.clone(),
                offset: start,
                bytes,
            })
        });
        let r = Self::first_error(results);
        if r.is_err() {
            self.remove_everywhere(job, dest);
        }
        r
    }

    /// Runs `spec` on every participant over its local data.
    pub fn remote_exec(&self, job: &JobId, spec: &PipelineSpec) -> Result<Vec<NodeReport>> {
        if spec.stages.is_empty() {
            return Err(ClusterError::Core(CoreError::InvalidArgument("pipeline has no stages".into())));
        }
        Self::first_error(self.each(|_, p| {
            let done = p.node.exec(job, spec)?;
            Ok(NodeReport {
                node: p.name.clone(),
                seconds: done.seconds,
                records: done.records,
            })
        }))
    }

    /// Streams every participant's `remote` file to the leader and merges
    /// them on `key`. Each stream holds at most a fixed-size buffer.
    pub fn distr_dmerge(&self, job: &JobId, key: KeyRange, remote: &str) -> Result<MergeStream> {
        let mut readers = Vec::with_capacity(self.len());
        for p in &self.participants {
            let stream = p.node.open(job, remote).map_err(|e| e.on(&p.name))?;
            readers.push(RecordReader::new(BufReader::with_capacity(STREAM_BUFFER, stream)));
        }
        Ok(MergeStream {
            inner: dmerge(readers, key),
            names: self.participants.iter().map(|p| p.name.clone()).collect(),
        })
    }

    /// Repartitions records so that each key lives on exactly one
    /// participant: a record goes to participant `stable_hash(key) mod n`.
    /// Reads `inputs` from every participant and writes `dest` on every
    /// participant. Returns the number of records each one received.
    pub fn shuffle_by_key(&self, job: &JobId, inputs: &[String], key: KeyRange, dest: &str) -> Result<Vec<u64>> {
        let n = self.len();
        let result = thread::scope(|s| {
            let mut writers = Vec::with_capacity(n);
            let mut uploads = Vec::with_capacity(n);
            for p in &self.participants {
                let (tx, rx) = mpsc::sync_channel(4);
                writers.push(ChannelWriter::new(tx));
                uploads.push(s.spawn(move || {
                    let mut r = ChannelReader::new(rx);
                    p.node.put(job, dest, &mut r).map_err(|e| e.on(&p.name))
                }));
            }
            let mut counts = vec![0u64; n];
            let routed = route(self, job, inputs, key, &mut writers, &mut counts);
            for w in &mut writers {
                if routed.is_ok() {
                    let _ = w.flush();
                } else {
                    w.abort();
                }
            }
            drop(writers);
            let uploaded: Vec<Result<u64>> = uploads.into_iter().map(|h| h.join().expect("upload thread panicked")).collect();
            match routed {
                // A write failure usually means an upload died; report its cause.
                Err(ClusterError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => {
                    Err(uploaded.into_iter().find_map(Result::err).unwrap_or(ClusterError::Io(e)))
                }
                Err(e) => Err(e),
                Ok(()) => Self::first_error(uploaded).map(|_| counts),
            }
        });
        if result.is_err() {
            self.remove_everywhere(job, dest);
        }
        result
    }

    /// Concatenates every participant's `remote` file into `out`, in
    /// participant order.
    pub fn gather_into(&self, job: &JobId, remote: &str, out: &mut dyn Write) -> Result<u64> {
        let mut total = 0;
        for p in &self.participants {
            let mut r = p.node.open(job, remote).map_err(|e| e.on(&p.name))?;
            total += match copy(&mut r, out) {
                Ok(n) => n,
                Err(CopyError::Read(e)) => return Err(e.on(&p.name)),
                Err(CopyError::Write(e)) => return Err(e.into()),
            };
        }
        out.flush()?;
        Ok(total)
    }

    /// [`Cluster::gather_into`] a local file. Running out of space on the
    /// leader is reported as [`ClusterError::LeaderDiskFull`].
    pub fn gather(&self, job: &JobId, remote: &str, local: &Path) -> Result<u64> {
        let disk_full = |e: ClusterError| match e {
            ClusterError::Io(io) if is_disk_full(&io) => ClusterError::LeaderDiskFull {
                path: local.to_path_buf(),
                source: io,
            },
            e => e,
        };
        let mut w = BufWriter::with_capacity(256 * 1024, File::create(local)?);
        let n = self.gather_into(job, remote, &mut w).map_err(disk_full)?;
        w.into_inner().map_err(|e| disk_full(e.into_error().into()))?;
        Ok(n)
    }

    /// Removes the job's directory on every participant. All participants
    /// are attempted; the first failure is returned.
    pub fn delete_job(&self, job: &JobId) -> Result<()> {
        Self::first_error(self.each(|_, p| p.node.delete(job, None))).map(|_| ())
    }
}

fn is_disk_full(e: &io::Error) -> bool {
    e.kind() == io::ErrorKind::StorageFull || e.raw_os_error() == Some(28)
}

enum CopyError {
    Read(ClusterError),
    Write(io::Error),
}

fn copy(r: &mut dyn Read, out: &mut dyn Write) -> Result<u64, CopyError> {
    let mut buf = vec![0; STREAM_BUFFER];
    let mut n = 0;
    loop {
        let got = match r.read(&mut buf) {
            Ok(0) => return Ok(n),
            Ok(got) => got,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(CopyError::Read(ClusterError::from_io(e))),
        };
        out.write_all(&buf[..got]).map_err(CopyError::Write)?;
        n += got as u64;
    }
}

fn route(
    cluster: &Cluster,
    job: &JobId,
    inputs: &[String],
    key: KeyRange,
    writers: &mut [ChannelWriter],
    counts: &mut [u64],
) -> Result<()> {
    let n = writers.len() as u64;
    for p in &cluster.participants {
        for input in inputs {
            let stream = p.node.open(job, input).map_err(|e| e.on(&p.name))?;
            for (i, rec) in RecordReader::new(BufReader::with_capacity(STREAM_BUFFER, stream)).enumerate() {
                let rec = rec.and_then(|r| key.check(r.as_str()).map(|_| r)).map_err(|e| {
                    let e = match e {
                        e @ CoreError::At { .. } => e,
                        e => CoreError::At {
                            stream: 1,
                            record: i as u64 + 1,
                            source: Box::new(e),
                        },
                    };
                    ClusterError::Node {
                        node: format!("{}, {input}", p.name),
                        source: Box::new(from_core(e)),
                    }
                })?;
                let d = (key.stable_hash(rec.as_str()) % n) as usize;
                rec.write_to(&mut writers[d])?;
                counts[d] += 1;
            }
        }
    }
    Ok(())
}

/// The leader's merged view of a distributed sorted dataset.
pub struct MergeStream {
    inner: DMerge<RecordReader<BufReader<Box<dyn Read + Send>>>>,
    names: Vec<String>,
}

impl Iterator for MergeStream {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Result<Record>> {
        Some(self.inner.next()?.map_err(|e| match e.position() {
            Some((stream, _)) => from_core(e).on(&self.names[stream - 1]),
            None => from_core(e),
        }))
    }
}

/// Byte offsets `[0, b1, .., len]` splitting `file` into `parts` chunks,
/// each boundary moved forward to the start of the next record.
pub fn chunk_bounds(file: &Path, parts: usize) -> Result<Vec<u64>> {
    if parts == 0 {
        return Err(ClusterError::EmptyCluster);
    }
    let mut f = File::open(file)?;
    let len = f.metadata()?.len();
    let mut bounds = vec![0u64];
    let mut buf = vec![0u8; 64 * 1024];
    for i in 1..parts as u64 {
        let target = ((len as u128 * i as u128) / parts as u128) as u64;
        let prev = *bounds.last().unwrap();
        let mut at = if target <= prev { prev } else { snap_forward(&mut f, target, len, &mut buf)? };
        at = at.max(prev);
        bounds.push(at);
    }
    bounds.push(len);
    Ok(bounds)
}

/// Smallest record start at or after `target`.
fn snap_forward(f: &mut File, target: u64, len: u64, buf: &mut [u8]) -> Result<u64> {
    let mut pos = target - 1;
    f.seek(SeekFrom::Start(pos))?;
    loop {
        let n = f.read(buf)?;
        if n == 0 {
            return Ok(len);
        }
        if let Some(i) = buf[..n].iter().position(|&b| b == b'\n') {
            return Ok(pos + i as u64 + 1);
        }
        pos += n as u64;
    }
}

enum Piece {
    Data(Vec<u8>),
    Abort,
}

/// Writer half of a bounded in-process byte channel.
struct ChannelWriter {
    tx: Option<SyncSender<Piece>>,
    buf: Vec<u8>,
}

impl ChannelWriter {
    fn new(tx: SyncSender<Piece>) -> Self {
        ChannelWriter {
            tx: Some(tx),
            buf: Vec::with_capacity(STREAM_BUFFER),
        }
    }

    fn abort(&mut self) {
        if let Some(tx) = self.tx.take() {
            let _ = tx.send(Piece::Abort);
        }
    }
}

impl Write for ChannelWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        if self.buf.len() >= STREAM_BUFFER {
            self.flush()?;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let chunk = std::mem::replace(&mut self.buf, Vec::with_capacity(STREAM_BUFFER));
        match &self.tx {
            Some(tx) => tx
                .send(Piece::Data(chunk))
                .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe)),
            None => Err(io::Error::from(io::ErrorKind::BrokenPipe)),
        }
    }
}

struct ChannelReader {
    rx: Receiver<Piece>,
    buf: Vec<u8>,
    pos: usize,
}

impl ChannelReader {
    fn new(rx: Receiver<Piece>) -> Self {
        ChannelReader { rx, buf: Vec::new(), pos: 0 }
    }
}

impl Read for ChannelReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(Piece::Data(d)) => {
                    self.buf = d;
                    self.pos = 0;
                }
                Ok(Piece::Abort) => return Err(io::Error::other("shuffle aborted")),
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}
