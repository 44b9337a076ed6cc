//! Byte-stream and clock abstractions shared by the crawler and the
//! simulated network.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, SocketAddrV4, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

/// A bidirectional byte stream with a configurable read timeout.
pub trait Conn: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
}

impl Conn for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

impl<C: Conn + ?Sized> Conn for Box<C> {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        (**self).set_read_timeout(timeout)
    }
}

/// Opens outbound connections.
pub trait Dialer: Send + Sync {
    fn dial(&self, addr: SocketAddrV4, timeout: Duration) -> io::Result<Box<dyn Conn>>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TcpDialer;

impl Dialer for TcpDialer {
    fn dial(&self, addr: SocketAddrV4, timeout: Duration) -> io::Result<Box<dyn Conn>> {
        let stream = TcpStream::connect_timeout(&SocketAddr::V4(addr), timeout)?;
        stream.set_nodelay(true)?;
        stream.set_write_timeout(Some(timeout))?;
        Ok(Box::new(stream))
    }
}

pub fn is_timeout(err: &io::Error) -> bool {
    matches!(
        err.kind(),
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
    )
}

#[derive(Default)]
struct PipeBuf {
    data: VecDeque<u8>,
    closed: bool,
}

#[derive(Default)]
struct Pipe {
    buf: Mutex<PipeBuf>,
    ready: Condvar,
}

/// One end of an in-process duplex stream created by [`duplex`].
pub struct PipeEnd {
    rx: Arc<Pipe>,
    tx: Arc<Pipe>,
    timeout: Option<Duration>,
}

/// Creates a connected pair of in-memory streams.
pub fn duplex() -> (PipeEnd, PipeEnd) {
    let a = Arc::new(Pipe::default());
    let b = Arc::new(Pipe::default());
    (
        PipeEnd {
            rx: a.clone(),
            tx: b.clone(),
            timeout: None,
        },
        PipeEnd {
            rx: b,
            tx: a,
            timeout: None,
        },
    )
}

impl Read for PipeEnd {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if out.is_empty() {
            return Ok(0);
        }
        let deadline = self.timeout.map(|t| Instant::now() + t);
        let mut buf = self.rx.buf.lock().unwrap();
        loop {
            if !buf.data.is_empty() {
                let n = out.len().min(buf.data.len());
                for (slot, byte) in out.iter_mut().zip(buf.data.drain(..n)) {
                    *slot = byte;
                }
                return Ok(n);
            }
            if buf.closed {
                return Ok(0);
            }
            buf = match deadline {
                None => self.rx.ready.wait(buf).unwrap(),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(io::ErrorKind::TimedOut.into());
                    }
                    self.rx.ready.wait_timeout(buf, d - now).unwrap().0
                }
            };
        }
    }
}

impl Write for PipeEnd {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let mut buf = self.tx.buf.lock().unwrap();
        if buf.closed {
            return Err(io::ErrorKind::BrokenPipe.into());
        }
        buf.data.extend(data);
        self.tx.ready.notify_all();
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for PipeEnd {
    fn drop(&mut self) {
        for pipe in [&self.rx, &self.tx] {
            pipe.buf.lock().unwrap().closed = true;
            pipe.ready.notify_all();
        }
    }
}

impl Conn for PipeEnd {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.timeout = timeout;
        Ok(())
    }
}

/// Time source. Durations are measured from an arbitrary fixed origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// A clock that only moves when someone sleeps on it.
#[derive(Default)]
pub struct VirtualClock {
    nanos: AtomicU64,
}

impl VirtualClock {
    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d)
    }
}
