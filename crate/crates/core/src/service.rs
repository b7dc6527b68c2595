//! Newline-delimited JSON ask/tell server around [`Scheduler`].
//!
//! Requests:
//!
//! ```text
//! {"op":"init","config":{"c":1.0,"W":10,"clusters":[{"name":"lr","values":[0.00025,0.0005]}]}}
//! {"op":"ask","session":"s1"}
//! {"op":"tell","session":"s1","v_bar":1.5}
//! {"op":"snapshot","session":"s1"}
//! {"op":"shutdown","session":"s1"}
//! ```
//!
//! Every response carries `ok`; failures add `error`. A bad line never
//! touches scheduler state.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};

use serde::{Deserialize, Serialize};

use crate::bandit::{HpCluster, Scheduler, SchedulerConfig, Snapshot};

pub const UNKNOWN_SESSION: &str = "unknown session";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct InitConfig {
    #[serde(flatten)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub clusters: Vec<HpCluster>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Init { config: InitConfig },
    Ask { session: String },
    Tell { session: String, v_bar: serde_json::Value },
    Snapshot { session: String },
    Shutdown { session: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Response {
    Session {
        ok: bool,
        session: String,
    },
    Decision {
        ok: bool,
        cluster: String,
        hp: String,
        value: f64,
        episode: u64,
    },
    Snapshot {
        ok: bool,
        snapshot: Box<Snapshot>,
    },
    Ok {
        ok: bool,
    },
    Error {
        ok: bool,
        error: String,
    },
}

impl Response {
    pub fn error(message: impl Into<String>) -> Self {
        Response::Error {
            ok: false,
            error: message.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        !matches!(self, Response::Error { .. })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses serialize")
    }
}

/// Sessions owned by one client connection.
#[derive(Debug, Default)]
pub struct Service {
    sessions: HashMap<String, Scheduler>,
    next_id: u64,
}

impl Service {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session(&self, id: &str) -> Option<&Scheduler> {
        self.sessions.get(id)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Handles one protocol line and returns the response line (no newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<serde_json::Value>(line) {
            Err(e) => Response::error(format!("malformed json: {e}")),
            Ok(value) => match serde_json::from_value::<Request>(value) {
                Err(e) => Response::error(format!("invalid request: {e}")),
                Ok(req) => self.handle(req),
            },
        };
        response.to_line()
    }

    pub fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Init { config } => match Scheduler::new(config.clusters, config.scheduler) {
                Ok(s) => {
                    self.next_id += 1;
                    let id = format!("s{}", self.next_id);
                    self.sessions.insert(id.clone(), s);
                    Response::Session { ok: true, session: id }
                }
                Err(e) => Response::error(e.to_string()),
            },
            Request::Ask { session } => self.with(&session, |s| match s.select() {
                Ok(d) => Response::Decision {
                    ok: true,
                    cluster: d.cluster_name,
                    hp: d.hp_name,
                    value: d.hp_value,
                    episode: d.episode,
                },
                Err(e) => Response::error(e.to_string()),
            }),
            Request::Tell { session, v_bar } => self.with(&session, |s| {
                if s.pending().is_none() {
                    return Response::error(crate::bandit::BanditError::NoPendingAsk.to_string());
                }
                let Some(v) = v_bar.as_f64().filter(|v| v.is_finite()) else {
                    return Response::error("v_bar must be a finite number");
                };
                match s.record(v) {
                    Ok(()) => Response::Ok { ok: true },
                    Err(e) => Response::error(e.to_string()),
                }
            }),
            Request::Snapshot { session } => self.with(&session, |s| Response::Snapshot {
                ok: true,
                snapshot: Box::new(s.snapshot()),
            }),
            Request::Shutdown { session } => match self.sessions.remove(&session) {
                Some(_) => Response::Ok { ok: true },
                None => Response::error(UNKNOWN_SESSION),
            },
        }
    }

    fn with(&mut self, id: &str, f: impl FnOnce(&mut Scheduler) -> Response) -> Response {
        match self.sessions.get_mut(id) {
            Some(s) => f(s),
            None => Response::error(UNKNOWN_SESSION),
        }
    }
}

/// Serves one connection until EOF; blank lines are ignored.
pub fn serve_lines<R: BufRead, W: Write>(reader: R, mut writer: W) -> io::Result<()> {
    let mut service = Service::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writer.write_all(service.handle_line(&line).as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

pub fn serve_stdio() -> io::Result<()> {
    let stdin = io::stdin();
    serve_lines(stdin.lock(), io::stdout().lock())
}

/// Accepts connections forever, one thread and one [`Service`] per connection.
pub fn serve_tcp(listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        std::thread::spawn(move || {
            if let Err(e) = serve_stream(stream) {
                eprintln!("connection closed with error: {e}");
            }
        });
    }
    Ok(())
}

fn serve_stream(stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(reader, BufWriter::new(stream))
}
