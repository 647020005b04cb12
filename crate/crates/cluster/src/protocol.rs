//! Wire protocol between the leader and worker daemons.
//!
//! A frame is a 4-byte big-endian payload length, a 1-byte frame type, and
//! the payload. Control frames carry JSON; `DATA` frames carry raw file
//! bytes.
//!
//! | type | byte | payload |
//! |------|------|---------|
//! | HELLO | 0x01 | `{"job": ID}`, first frame on every connection |
//! | PUT_CHUNK | 0x02 | `{"path": P}`, followed by DATA* END; answered by OK |
//! | EXEC_PIPELINE | 0x03 | `{"stages": [[cmd, args..]..], "inputs": [..], "output": P}`; answered by OK |
//! | STREAM_FILE | 0x04 | `{"path": P}`; answered by DATA* END |
//! | DATA | 0x05 | at most 64 KiB of bytes |
//! | END | 0x06 | empty |
//! | OK | 0x07 | `{"bytes": N, "records": N, "seconds": S}` |
//! | ERR | 0x08 | `{"message": M}`; the sender closes the connection |
//! | DELETE_JOB | 0x09 | `{"path": P or null}`; null removes the whole job; answered by OK |

use std::io::{self, Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{ClusterError, Result};

pub const MAX_FRAME: usize = 16 * 1024 * 1024;
pub const DATA_CHUNK: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    PutChunk = 0x02,
    ExecPipeline = 0x03,
    StreamFile = 0x04,
    Data = 0x05,
    End = 0x06,
    Ok = 0x07,
    Err = 0x08,
    DeleteJob = 0x09,
}

impl TryFrom<u8> for FrameType {
    type Error = ClusterError;

    fn try_from(b: u8) -> Result<Self> {
        use FrameType as T;
        Ok(match b {
            0x01 => T::Hello,
            0x02 => T::PutChunk,
            0x03 => T::ExecPipeline,
            0x04 => T::StreamFile,
            0x05 => T::Data,
            0x06 => T::End,
            0x07 => T::Ok,
            0x08 => T::Err,
            0x09 => T::DeleteJob,
            b => return Err(ClusterError::Protocol(format!("unknown frame type 0x{b:02x}"))),
        })
    }
}

#[derive(Debug)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn control<T: Serialize>(kind: FrameType, body: &T) -> Frame {
        Frame {
            kind,
            payload: serde_json::to_vec(body).expect("control bodies serialize"),
        }
    }

    pub fn empty(kind: FrameType) -> Frame {
        Frame { kind, payload: Vec::new() }
    }

    pub fn body<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_slice(&self.payload)
            .map_err(|e| ClusterError::Protocol(format!("bad {:?} payload: {e}", self.kind)))
    }

    /// Turns an ERR frame into an error, and any other unexpected frame into
    /// a protocol error.
    pub fn unexpected(self, wanted: &str) -> ClusterError {
        if self.kind == FrameType::Err {
            match self.body::<ErrBody>() {
                Ok(b) => ClusterError::Remote(b.message),
                Err(e) => e,
            }
        } else {
            ClusterError::Protocol(format!("expected {wanted}, got {:?}", self.kind))
        }
    }
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, kind: FrameType, payload: &[u8]) -> io::Result<()> {
    debug_assert!(payload.len() <= MAX_FRAME);
    let mut header = [0u8; 5];
    header[..4].copy_from_slice(&(payload.len() as u32).to_be_bytes());
    header[4] = kind as u8;
    w.write_all(&header)?;
    w.write_all(payload)
}

pub fn send<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> io::Result<()> {
    write_frame(w, frame.kind, &frame.payload)?;
    w.flush()
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream before any
/// header byte.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; 5];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ClusterError::Protocol("truncated frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    let kind = FrameType::try_from(header[4])?;
    if len > MAX_FRAME {
        return Err(ClusterError::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut payload = vec![0; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ClusterError::Protocol("truncated frame payload".into()),
        _ => e.into(),
    })?;
    Ok(Some(Frame { kind, payload }))
}

pub fn expect_frame<R: Read + ?Sized>(r: &mut R) -> Result<Frame> {
    read_frame(r)?.ok_or_else(|| ClusterError::Protocol("connection closed by peer".into()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Hello {
    pub job: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PathBody {
    pub path: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DeleteBody {
    pub path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExecBody {
    pub stages: Vec<Vec<String>>,
    pub inputs: Vec<String>,
    pub output: String,
    /// Sort memory budget in bytes; the daemon default applies when absent.
    pub mem_budget: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OkBody {
    #[serde(default)]
    pub bytes: u64,
    #[serde(default)]
    pub records: u64,
    #[serde(default)]
    pub seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrBody {
    pub message: String,
}

/// Sends written bytes as DATA frames. `finish` flushes and sends END.
pub struct DataWriter<W: Write> {
    inner: W,
    buf: Vec<u8>,
    bytes: u64,
}

impl<W: Write> DataWriter<W> {
    pub fn new(inner: W) -> Self {
        DataWriter {
            inner,
            buf: Vec::with_capacity(DATA_CHUNK),
            bytes: 0,
        }
    }

    fn emit(&mut self) -> io::Result<()> {
        if !self.buf.is_empty() {
            write_frame(&mut self.inner, FrameType::Data, &self.buf)?;
            self.buf.clear();
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<(W, u64)> {
        self.emit()?;
        write_frame(&mut self.inner, FrameType::End, &[])?;
        self.inner.flush()?;
        Ok((self.inner, self.bytes))
    }
}

impl<W: Write> Write for DataWriter<W> {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let n = data.len().min(DATA_CHUNK - self.buf.len());
        self.buf.extend_from_slice(&data[..n]);
        self.bytes += n as u64;
        if self.buf.len() == DATA_CHUNK {
            self.emit()?;
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.emit()?;
        self.inner.flush()
    }
}

/// Reads the bytes of a DATA* END sequence. An ERR frame in place of data
/// surfaces as an I/O error carrying the remote message.
pub struct DataReader<R: Read> {
    inner: R,
    buf: Vec<u8>,
    pos: usize,
    done: bool,
}

impl<R: Read> DataReader<R> {
    pub fn new(inner: R) -> Self {
        DataReader {
            inner,
            buf: Vec::new(),
            pos: 0,
            done: false,
        }
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    fn refill(&mut self) -> io::Result<()> {
        let frame = expect_frame(&mut self.inner).map_err(io::Error::other)?;
        match frame.kind {
            FrameType::Data => {
                self.buf = frame.payload;
                self.pos = 0;
            }
            FrameType::End => self.done = true,
            _ => return Err(io::Error::other(frame.unexpected("DATA or END"))),
        }
        Ok(())
    }
}

impl<R: Read> Read for DataReader<R> {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.buf.len() {
            if self.done {
                return Ok(0);
            }
            self.refill()?;
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_length_type_payload() {
        let mut out = Vec::new();
        write_frame(&mut out, FrameType::Data, b"abc").unwrap();
        assert_eq!(out, [0, 0, 0, 3, 0x05, b'a', b'b', b'c']);
        let f = read_frame(&mut out.as_slice()).unwrap().unwrap();
        assert_eq!((f.kind, f.payload.as_slice()), (FrameType::Data, &b"abc"[..]));
        assert!(read_frame(&mut &[][..]).unwrap().is_none());
    }

    #[test]
    fn rejects_unknown_types_and_oversized_frames() {
        assert!(read_frame(&mut &[0, 0, 0, 0, 0x7f][..]).is_err());
        assert!(read_frame(&mut &[0xff, 0, 0, 0, 0x05][..]).is_err());
        assert!(read_frame(&mut &[0, 0, 0, 9, 0x05, 1][..]).is_err());
    }

    #[test]
    fn data_stream_round_trip() {
        let data: Vec<u8> = (0..200_000u32).map(|i| (i % 251) as u8).collect();
        let mut w = DataWriter::new(Vec::new());
        w.write_all(&data).unwrap();
        let (wire, n) = w.finish().unwrap();
        assert_eq!(n, data.len() as u64);
        let mut back = Vec::new();
        DataReader::new(wire.as_slice()).read_to_end(&mut back).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn err_frame_in_stream_is_an_error() {
        let mut wire = Vec::new();
        write_frame(&mut wire, FrameType::Data, b"x").unwrap();
        send(&mut wire, &Frame::control(FrameType::Err, &ErrBody { message: "boom".into() })).unwrap();
        let err = DataReader::new(wire.as_slice()).read_to_end(&mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("boom"), "{err}");
    }
}
