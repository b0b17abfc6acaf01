//! Remote classifier client and server speaking newline-delimited JSON.
//!
//! One request per line, one response per line, strictly request/response
//! per connection:
//!
//! ```text
//! -> {"id":7,"width":2,"height":1,"pixels":"<base64 raw RGB bytes>"}
//! <- {"id":7,"probs":[0.1,0.9]}
//! ```
//!
//! Responses must echo the request id. A response may carry an `error`
//! string instead of `probs`, which surfaces as a backend error distinct
//! from transport failures.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ClassifierOracle, OracleError, ProbVector};
use crate::colorspace::RgbImage;

#[derive(Debug, Serialize, Deserialize)]
struct WireRequest {
    id: u64,
    width: u32,
    height: u32,
    pixels: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireResponse {
    id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

struct Connection {
    writer: BufWriter<TcpStream>,
    reader: BufReader<TcpStream>,
    next_id: u64,
}

impl Connection {
    fn dial(addr: &str, timeout: Option<Duration>) -> Result<Self, OracleError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(timeout)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self {
            writer: BufWriter::new(stream),
            reader,
            next_id: 0,
        })
    }

    fn round_trip(&mut self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        let id = self.next_id;
        self.next_id += 1;
        let request = WireRequest {
            id,
            width: img.width(),
            height: img.height(),
            pixels: BASE64.encode(img.as_bytes()),
        };
        let mut line = serde_json::to_string(&request)
            .map_err(|e| OracleError::Protocol(format!("request encoding failed: {e}")))?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;

        let mut response_line = String::new();
        let read = self.reader.read_line(&mut response_line)?;
        if read == 0 {
            return Err(OracleError::Protocol("server closed connection".into()));
        }
        let response: WireResponse = serde_json::from_str(response_line.trim_end())
            .map_err(|e| OracleError::Protocol(format!("malformed response: {e}")))?;
        if response.id != id {
            return Err(OracleError::Protocol(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        if let Some(message) = response.error {
            return Err(OracleError::Backend(message));
        }
        let probs = response
            .probs
            .ok_or_else(|| OracleError::Protocol("response carries neither probs nor error".into()))?;
        ProbVector::new(probs)
    }
}

#[derive(Default)]
struct PoolState {
    idle: Vec<Connection>,
    open: usize,
}

/// Client for a remote classifier. One request is in flight per connection;
/// concurrent callers share a pool of at most `pool_size` connections.
pub struct RemoteOracle {
    addr: String,
    pool: Mutex<PoolState>,
    available: Condvar,
    pool_size: usize,
    timeout: Option<Duration>,
}

impl RemoteOracle {
    /// Connects to `addr` (host:port), validating reachability by dialing
    /// one connection eagerly.
    pub fn connect(addr: impl Into<String>) -> Result<Self, OracleError> {
        let addr = addr.into();
        let first = Connection::dial(&addr, None)?;
        Ok(Self {
            addr,
            pool: Mutex::new(PoolState {
                idle: vec![first],
                open: 1,
            }),
            available: Condvar::new(),
            pool_size: 1,
            timeout: None,
        })
    }

    pub fn with_pool_size(mut self, pool_size: usize) -> Self {
        self.pool_size = pool_size.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    fn acquire(&self) -> Result<Connection, OracleError> {
        let mut state = self.pool.lock().expect("pool lock");
        loop {
            if let Some(conn) = state.idle.pop() {
                return Ok(conn);
            }
            if state.open < self.pool_size {
                state.open += 1;
                drop(state);
                return match Connection::dial(&self.addr, self.timeout) {
                    Ok(conn) => Ok(conn),
                    Err(e) => {
                        self.pool.lock().expect("pool lock").open -= 1;
                        self.available.notify_one();
                        Err(e)
                    }
                };
            }
            state = self.available.wait(state).expect("pool lock");
        }
    }

    fn release(&self, conn: Connection) {
        self.pool.lock().expect("pool lock").idle.push(conn);
        self.available.notify_one();
    }

    fn discard(&self) {
        self.pool.lock().expect("pool lock").open -= 1;
        self.available.notify_one();
    }
}

impl ClassifierOracle for RemoteOracle {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        let mut conn = self.acquire()?;
        match conn.round_trip(img) {
            Ok(probs) => {
                self.release(conn);
                Ok(probs)
            }
            Err(e) => {
                // A failed exchange leaves the stream in an unknown state.
                self.discard();
                Err(e)
            }
        }
    }

    fn id(&self) -> String {
        format!("remote:{}", self.addr)
    }
}

/// Serves any oracle over the wire protocol. Used by tests as the loopback
/// peer and by deployments that want to expose the reference classifier.
pub struct OracleServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl OracleServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving
    /// `oracle` in background threads, one connection per thread.
    pub fn spawn(
        addr: &str,
        oracle: Arc<dyn ClassifierOracle>,
    ) -> Result<Self, OracleError> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let oracle = oracle.clone();
                std::thread::spawn(move || serve_connection(stream, oracle));
            }
        });
        Ok(Self {
            addr: local,
            shutdown,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting new connections and joins the accept loop.
    pub fn stop(&mut self) {
        if self.accept_thread.is_none() {
            return;
        }
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept call.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for OracleServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_connection(stream: TcpStream, oracle: Arc<dyn ClassifierOracle>) {
    let _ = stream.set_nodelay(true);
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let reader = BufReader::new(read_half);
    let mut writer = BufWriter::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let response = match handle_request(&line, oracle.as_ref()) {
            Ok(response) => response,
            Err(_) => break, // unparseable request line: drop the connection
        };
        let Ok(mut encoded) = serde_json::to_string(&response) else {
            break;
        };
        encoded.push('\n');
        if writer.write_all(encoded.as_bytes()).is_err() || writer.flush().is_err() {
            break;
        }
    }
}

fn handle_request(
    line: &str,
    oracle: &dyn ClassifierOracle,
) -> Result<WireResponse, serde_json::Error> {
    let request: WireRequest = serde_json::from_str(line.trim_end())?;
    let outcome = BASE64
        .decode(&request.pixels)
        .map_err(|e| format!("bad pixel payload: {e}"))
        .and_then(|bytes| {
            RgbImage::new(request.width, request.height, bytes).map_err(|e| e.to_string())
        })
        .and_then(|img| oracle.predict(&img).map_err(|e| e.to_string()));
    Ok(match outcome {
        Ok(probs) => WireResponse {
            id: request.id,
            probs: Some(probs.as_slice().to_vec()),
            error: None,
        },
        Err(message) => WireResponse {
            id: request.id,
            probs: None,
            error: Some(message),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testing::ConstantOracle;

    #[test]
    fn loopback_round_trip_returns_server_payload() {
        let server = OracleServer::spawn(
            "127.0.0.1:0",
            Arc::new(ConstantOracle {
                probs: vec![0.25, 0.75],
            }),
        )
        .unwrap();
        let oracle = RemoteOracle::connect(server.addr().to_string()).unwrap();
        let img = RgbImage::filled(2, 2, [1, 2, 3]);
        let probs = oracle.predict(&img).unwrap();
        assert_eq!(probs.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn negative_probability_response_is_rejected() {
        // Raw fake server that echoes the id but violates the invariant.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let req: WireRequest = serde_json::from_str(line.trim_end()).unwrap();
            let mut w = BufWriter::new(stream);
            writeln!(w, "{{\"id\":{},\"probs\":[-0.1,1.1]}}", req.id).unwrap();
            w.flush().unwrap();
        });
        let oracle = RemoteOracle::connect(addr.to_string()).unwrap();
        let err = oracle.predict(&RgbImage::filled(1, 1, [0, 0, 0])).unwrap_err();
        assert!(matches!(err, OracleError::InvalidProbVector(_)), "{err}");
    }

    #[test]
    fn mismatched_id_is_protocol_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut w = BufWriter::new(stream);
            writeln!(w, "{{\"id\":999,\"probs\":[1.0]}}").unwrap();
            w.flush().unwrap();
        });
        let oracle = RemoteOracle::connect(addr.to_string()).unwrap();
        let err = oracle.predict(&RgbImage::filled(1, 1, [0, 0, 0])).unwrap_err();
        assert!(matches!(err, OracleError::Protocol(_)), "{err}");
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // Port 1 on localhost is essentially never listening.
        let Err(err) = RemoteOracle::connect("127.0.0.1:1") else {
            panic!("connect to a closed port succeeded");
        };
        assert!(matches!(err, OracleError::Transport(_)), "{err}");
    }

    #[test]
    fn backend_error_response_is_backend_error() {
        let server = OracleServer::spawn(
            "127.0.0.1:0",
            Arc::new(ConstantOracle {
                probs: vec![0.5, 0.6], // invalid on purpose: sums to 1.1
            }),
        )
        .unwrap();
        let oracle = RemoteOracle::connect(server.addr().to_string()).unwrap();
        let err = oracle.predict(&RgbImage::filled(1, 1, [0, 0, 0])).unwrap_err();
        assert!(matches!(err, OracleError::Backend(_)), "{err}");
    }
}
