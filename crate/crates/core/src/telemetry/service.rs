//! Network endpoints: the canonical UDP link and a JSON-over-WebSocket
//! mirror for browser clients.
//!
//! Background threads only touch two things shared with the simulation
//! loop: the inbound command queue and the outbound fan-out.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::codec::{decode, Message, MAX_FRAME};

const POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Udp,
    Mirror,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub seq: u32,
    pub message: Message,
    pub via: Channel,
}

/// JSON form of a catalog message on the mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorFrame {
    pub seq: u32,
    #[serde(flatten)]
    pub message: Message,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub udp_addr: SocketAddr,
    pub mirror_addr: Option<SocketAddr>,
}

impl ServiceConfig {
    pub fn local(udp_port: u16, mirror_port: Option<u16>) -> Self {
        Self {
            udp_addr: SocketAddr::from(([0, 0, 0, 0], udp_port)),
            mirror_addr: mirror_port.map(|p| SocketAddr::from(([127, 0, 0, 1], p))),
        }
    }
}

#[derive(Debug, Default)]
pub struct ServiceCounters {
    pub received: AtomicU64,
    pub rejected: AtomicU64,
    pub sent: AtomicU64,
}

type Clients = Arc<Mutex<Vec<Sender<String>>>>;

pub struct TelemetryService {
    udp: UdpSocket,
    peer: Arc<Mutex<Option<SocketAddr>>>,
    inbound: Receiver<Inbound>,
    clients: Clients,
    greeting: Arc<Mutex<Option<String>>>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    pub counters: Arc<ServiceCounters>,
    mirror_addr: Option<SocketAddr>,
}

impl TelemetryService {
    /// Binds both endpoints; fails if either port is taken.
    pub fn start(config: &ServiceConfig) -> io::Result<Self> {
        let udp = UdpSocket::bind(config.udp_addr)?;
        udp.set_read_timeout(Some(POLL * 5))?;
        let listener = config.mirror_addr.map(TcpListener::bind).transpose()?;
        let mirror_addr = listener.as_ref().map(|l| l.local_addr()).transpose()?;

        let (tx, rx) = mpsc::channel();
        let peer = Arc::new(Mutex::new(None));
        let stop = Arc::new(AtomicBool::new(false));
        let counters = Arc::new(ServiceCounters::default());
        let clients: Clients = Arc::new(Mutex::new(Vec::new()));
        let greeting = Arc::new(Mutex::new(None));
        let mut threads = Vec::new();

        {
            let sock = udp.try_clone()?;
            let (tx, peer, stop, counters) = (tx.clone(), peer.clone(), stop.clone(), counters.clone());
            threads.push(thread::spawn(move || udp_loop(sock, tx, peer, stop, counters)));
        }
        if let Some(listener) = listener {
            listener.set_nonblocking(true)?;
            let (clients, greeting, stop, counters) =
                (clients.clone(), greeting.clone(), stop.clone(), counters.clone());
            threads.push(thread::spawn(move || {
                accept_loop(listener, tx, clients, greeting, stop, counters)
            }));
        }
        Ok(Self {
            udp,
            peer,
            inbound: rx,
            clients,
            greeting,
            stop,
            threads,
            counters,
            mirror_addr,
        })
    }

    pub fn udp_addr(&self) -> io::Result<SocketAddr> {
        self.udp.local_addr()
    }

    pub fn mirror_addr(&self) -> Option<SocketAddr> {
        self.mirror_addr
    }

    /// JSON sent to every mirror client on connect (the static map).
    pub fn set_greeting(&self, json: String) {
        *self.greeting.lock().expect("greeting lock") = Some(json);
    }

    /// Commands received since the last call, in arrival order.
    pub fn drain(&self) -> Vec<Inbound> {
        self.inbound.try_iter().collect()
    }

    /// Sends frames to the learned UDP peer and mirrors them as JSON.
    pub fn publish(&self, frames: &[(u32, Message, Vec<u8>)]) {
        let peer = *self.peer.lock().expect("peer lock");
        if let Some(peer) = peer {
            for (_, _, bytes) in frames {
                match self.udp.send_to(bytes, peer) {
                    Ok(_) => {
                        self.counters.sent.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => log::warn!("udp send to {peer} failed: {e}"),
                }
            }
        }
        let mut clients = self.clients.lock().expect("clients lock");
        if clients.is_empty() {
            return;
        }
        for (seq, message, _) in frames {
            let json = serde_json::to_string(&MirrorFrame {
                seq: *seq,
                message: message.clone(),
            })
            .expect("catalog messages serialize");
            clients.retain(|c| c.send(json.clone()).is_ok());
        }
    }
}

impl Drop for TelemetryService {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn udp_loop(
    sock: UdpSocket,
    tx: Sender<Inbound>,
    peer: Arc<Mutex<Option<SocketAddr>>>,
    stop: Arc<AtomicBool>,
    counters: Arc<ServiceCounters>,
) {
    let mut buf = vec![0u8; MAX_FRAME + 64];
    while !stop.load(Ordering::Relaxed) {
        let (n, from) = match sock.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                log::warn!("udp receive failed: {e}");
                continue;
            }
        };
        counters.received.fetch_add(1, Ordering::Relaxed);
        {
            let mut p = peer.lock().expect("peer lock");
            if p.is_none() {
                log::info!("ground station at {from}");
            }
            *p = Some(from);
        }
        match decode(&buf[..n]) {
            Ok((seq, message)) => {
                let _ = tx.send(Inbound {
                    seq,
                    message,
                    via: Channel::Udp,
                });
            }
            Err(e) => {
                counters.rejected.fetch_add(1, Ordering::Relaxed);
                log::warn!("dropped datagram from {from}: {e}");
            }
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<Inbound>,
    clients: Clients,
    greeting: Arc<Mutex<Option<String>>>,
    stop: Arc<AtomicBool>,
    counters: Arc<ServiceCounters>,
) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, addr)) => {
                log::info!("mirror client {addr} connected");
                let (out_tx, out_rx) = mpsc::channel();
                if let Some(g) = greeting.lock().expect("greeting lock").clone() {
                    let _ = out_tx.send(g);
                }
                clients.lock().expect("clients lock").push(out_tx);
                let (tx, stop, counters) = (tx.clone(), stop.clone(), counters.clone());
                workers.push(thread::spawn(move || {
                    if let Err(e) = mirror_client(stream, tx, out_rx, stop, counters) {
                        log::info!("mirror client {addr} closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("mirror accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

#[allow(clippy::result_large_err)]
fn mirror_client(
    stream: TcpStream,
    tx: Sender<Inbound>,
    outbound: Receiver<String>,
    stop: Arc<AtomicBool>,
    counters: Arc<ServiceCounters>,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => {
            tungstenite::Error::Io(io::Error::new(io::ErrorKind::Interrupted, "handshake interrupted"))
        }
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(tungstenite::Message::Text(text)) => {
                counters.received.fetch_add(1, Ordering::Relaxed);
                match serde_json::from_str::<MirrorFrame>(&text) {
                    Ok(f) => {
                        let _ = tx.send(Inbound {
                            seq: f.seq,
                            message: f.message,
                            via: Channel::Mirror,
                        });
                    }
                    Err(e) => {
                        counters.rejected.fetch_add(1, Ordering::Relaxed);
                        log::warn!("bad mirror message: {e}");
                    }
                }
            }
            Ok(tungstenite::Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        for json in outbound.try_iter() {
            ws.send(tungstenite::Message::Text(json))?;
        }
    }
    let _ = ws.close(None);
    Ok(())
}
