//! Ordered, reliable duplex frame transports.

use std::io::BufReader;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use super::frame::Frame;
use super::ProtocolError;

pub trait Transport: Send {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError>;
    fn recv_frame(&mut self) -> Result<Frame, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        (**self).recv_frame()
    }
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        (**self).recv_frame()
    }
}

/// One end of an in-process duplex channel. Frames travel as their wire
/// bytes so framing is exercised exactly as on a socket.
pub struct InProcTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn in_process_pair() -> (InProcTransport, InProcTransport) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (InProcTransport { tx: tx_a, rx: rx_a }, InProcTransport { tx: tx_b, rx: rx_b })
}

impl Transport for InProcTransport {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.tx
            .send(frame.to_bytes())
            .map_err(|_| ProtocolError::Transport("peer endpoint closed".into()))
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        let bytes = self
            .rx
            .recv()
            .map_err(|_| ProtocolError::Transport("peer endpoint closed".into()))?;
        Frame::from_bytes(&bytes)
    }
}

/// Stream socket transport. Nagle is disabled so piggybacked frames are not
/// held back waiting for an acknowledgement.
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn from_stream(stream: TcpStream) -> Result<Self, ProtocolError> {
        stream.set_nodelay(true).map_err(ProtocolError::transport)?;
        let writer = stream.try_clone().map_err(ProtocolError::transport)?;
        Ok(TcpTransport {
            reader: BufReader::new(stream),
            writer,
        })
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtocolError> {
        Self::from_stream(TcpStream::connect(addr).map_err(ProtocolError::transport)?)
    }

    pub fn accept(listener: &TcpListener) -> Result<Self, ProtocolError> {
        let (stream, _) = listener.accept().map_err(ProtocolError::transport)?;
        Self::from_stream(stream)
    }
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        frame.write_to(&mut self.writer)
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        Frame::read_from(&mut self.reader)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireDirection {
    Out,
    In,
}

/// Raw frame bytes seen by a [`Tap`], in order.
pub type WireLog = Arc<Mutex<Vec<(WireDirection, Vec<u8>)>>>;

/// Records every frame crossing the wrapped transport.
pub struct Tap<T> {
    inner: T,
    log: WireLog,
}

impl<T: Transport> Tap<T> {
    pub fn new(inner: T) -> (Self, WireLog) {
        let log = WireLog::default();
        (
            Tap {
                inner,
                log: Arc::clone(&log),
            },
            log,
        )
    }
}

impl<T: Transport> Transport for Tap<T> {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.log.lock().unwrap().push((WireDirection::Out, frame.to_bytes()));
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        let f = self.inner.recv_frame()?;
        self.log.lock().unwrap().push((WireDirection::In, f.to_bytes()));
        Ok(f)
    }
}

/// Flips one ciphertext byte of the `frame_index`-th outgoing frame.
pub struct Tamper<T> {
    inner: T,
    frame_index: usize,
    byte_index: usize,
    sent: usize,
}

impl<T: Transport> Tamper<T> {
    pub fn new(inner: T, frame_index: usize, byte_index: usize) -> Self {
        Tamper {
            inner,
            frame_index,
            byte_index,
            sent: 0,
        }
    }
}

impl<T: Transport> Transport for Tamper<T> {
    fn send_frame(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        let n = self.sent;
        self.sent += 1;
        if n == self.frame_index && !frame.ciphertext.is_empty() {
            let mut f = frame.clone();
            let i = self.byte_index % f.ciphertext.len();
            f.ciphertext[i] ^= 0x01;
            return self.inner.send_frame(&f);
        }
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Frame, ProtocolError> {
        self.inner.recv_frame()
    }
}
