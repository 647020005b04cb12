//! Worker daemon: serves protocol requests against a [`JobStore`].

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use leanstack_core::pipeline::Stage;
use leanstack_core::tukubai::MemoryBudget;

use crate::error::{ClusterError, Result};
use crate::protocol::{
    expect_frame, read_frame, send, DataReader, DataWriter, DeleteBody, ErrBody, ExecBody, Frame,
    FrameType, Hello, OkBody, PathBody,
};
use crate::store::{JobId, JobStore, PipelineSpec};

pub struct WorkerDaemon {
    listener: TcpListener,
    store: JobStore,
    stop: Arc<AtomicBool>,
}

/// Handle to a daemon running on a background thread.
pub struct DaemonHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl WorkerDaemon {
    pub fn bind(addr: impl ToSocketAddrs, store: JobStore) -> Result<WorkerDaemon> {
        Ok(WorkerDaemon {
            listener: TcpListener::bind(addr)?,
            store,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Accepts connections until stopped, one thread per connection.
    pub fn serve(self) {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let store = self.store.clone();
                    thread::spawn(move || {
                        let peer = stream.peer_addr().ok();
                        if let Err(e) = handle(stream, &store) {
                            log::debug!("connection {peer:?}: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept: {e}"),
            }
        }
    }

    pub fn spawn(self) -> DaemonHandle {
        let addr = self.local_addr();
        let stop = self.stop.clone();
        let thread = thread::spawn(move || self.serve());
        DaemonHandle {
            addr,
            stop,
            thread: Some(thread),
        }
    }
}

impl DaemonHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Requests already in flight finish on
    /// their own threads.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(t) = self.thread.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Wake the accept loop so it sees the flag.
            let _ = TcpStream::connect(self.addr);
            let _ = t.join();
        }
    }
}

impl Drop for DaemonHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn reply_err(w: &mut impl Write, e: &ClusterError) {
    let _ = send(w, &Frame::control(FrameType::Err, &ErrBody { message: e.to_string() }));
}

fn handle(stream: TcpStream, store: &JobStore) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut r = BufReader::with_capacity(128 * 1024, stream.try_clone()?);
    let mut w = BufWriter::with_capacity(128 * 1024, stream.try_clone()?);
    let result = serve_connection(&mut r, &mut w, store);
    if let Err(e) = &result {
        reply_err(&mut w, e);
        let _ = w.flush();
        let _ = stream.shutdown(Shutdown::Both);
    }
    result
}

fn serve_connection(r: &mut impl Read, w: &mut impl Write, store: &JobStore) -> Result<()> {
    let hello = expect_frame(r)?;
    if hello.kind != FrameType::Hello {
        return Err(ClusterError::Protocol(format!("expected HELLO, got {:?}", hello.kind)));
    }
    let job = JobId::new(hello.body::<Hello>()?.job)?;
    while let Some(frame) = read_frame(r)? {
        match frame.kind {
            FrameType::PutChunk => {
                let body: PathBody = frame.body()?;
                let mut data = DataReader::new(&mut *r);
                let bytes = store.put(&job, &body.path, &mut data)?;
                ok(w, OkBody { bytes, ..OkBody::default() })?;
            }
            FrameType::ExecPipeline => {
                let body: ExecBody = frame.body()?;
                let spec = decode_exec(body)?;
                let done = store.exec(&job, &spec)?;
                ok(w, done)?;
            }
            FrameType::StreamFile => {
                let body: PathBody = frame.body()?;
                let mut file = store.open_file(&job, &body.path)?;
                let mut data = DataWriter::new(&mut *w);
                io::copy(&mut file, &mut data)?;
                data.finish()?;
            }
            FrameType::DeleteJob => {
                let body: DeleteBody = frame.body()?;
                store.delete(&job, body.path.as_deref())?;
                ok(w, OkBody::default())?;
            }
            kind => {
                return Err(ClusterError::Protocol(format!("unexpected {kind:?} frame")));
            }
        }
    }
    Ok(())
}

fn ok(w: &mut impl Write, body: OkBody) -> Result<()> {
    send(w, &Frame::control(FrameType::Ok, &body))?;
    Ok(())
}

pub(crate) fn encode_exec(spec: &PipelineSpec) -> ExecBody {
    ExecBody {
        stages: spec.stages.iter().map(Stage::words).collect(),
        inputs: spec.inputs.clone(),
        output: spec.output.clone(),
        mem_budget: spec.mem_budget.map(|b| b.bytes() as u64),
    }
}

fn decode_exec(body: ExecBody) -> Result<PipelineSpec> {
    let stages = body
        .stages
        .iter()
        .map(|w| match w.split_first() {
            Some((cmd, args)) => Ok(Stage::parse(cmd, args)?),
            None => Err(ClusterError::Protocol("empty stage".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spec = PipelineSpec::new(stages, body.inputs, body.output)?;
    spec.mem_budget = body
        .mem_budget
        .map(|b| MemoryBudget::new(b as usize))
        .transpose()?;
    Ok(spec)
}
