//! Minimal HTTP handling for the service port: robot model, console assets
//! and the websocket upgrade.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::path::{Component, Path, PathBuf};

use serde_json::{json, Value};

use crate::kinematics::{JointKind, Pose, RobotModel};

const MAX_HEAD: usize = 16 * 1024;

#[derive(Debug)]
pub(crate) struct Request {
    pub path: String,
    pub headers: Vec<(String, String)>,
    /// Bytes read past the end of the head.
    pub rest: Vec<u8>,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn is_websocket(&self) -> bool {
        self.header("upgrade").is_some_and(|u| u.eq_ignore_ascii_case("websocket"))
    }
}

pub(crate) fn read_request(stream: &mut TcpStream) -> io::Result<Request> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let end = loop {
        if let Some(i) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break i + 4;
        }
        if buf.len() > MAX_HEAD {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large"));
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let head = std::str::from_utf8(&buf[..end]).map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "non-utf8 head"))?;
    let mut lines = head.split("\r\n");
    let request_line = lines.next().unwrap_or_default();
    let mut parts = request_line.split_whitespace();
    if parts.next() != Some("GET") {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "only GET is supported"));
    }
    let target = parts.next().unwrap_or("/");
    let path = target.split(['?', '#']).next().unwrap_or("/").to_string();
    let headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    Ok(Request {
        path,
        headers,
        rest: buf[end..].to_vec(),
    })
}

pub(crate) fn respond(stream: &mut TcpStream, status: &str, content_type: &str, body: &[u8]) -> io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nCache-Control: no-cache\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

pub(crate) fn websocket_accept(stream: &mut TcpStream, req: &Request) -> io::Result<()> {
    let key = req
        .header("sec-websocket-key")
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing Sec-WebSocket-Key"))?;
    let accept = tungstenite::handshake::derive_accept_key(key.as_bytes());
    write!(
        stream,
        "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {accept}\r\n\r\n"
    )?;
    stream.flush()
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "wasm" => "application/wasm",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// Maps a URL path onto a file under `root`, refusing anything that would
/// escape it.
pub(crate) fn static_file(root: &Path, url_path: &str) -> Option<PathBuf> {
    let rel = url_path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(rel);
    let full = if full.is_dir() { full.join("index.html") } else { full };
    full.is_file().then_some(full)
}

pub(crate) fn serve_static(stream: &mut TcpStream, root: Option<&Path>, url_path: &str) -> io::Result<()> {
    match root.and_then(|r| static_file(r, url_path)) {
        Some(file) => {
            let body = std::fs::read(&file)?;
            respond(stream, "200 OK", content_type(&file), &body)
        }
        None => respond(stream, "404 Not Found", "text/plain; charset=utf-8", b"not found\n"),
    }
}

fn pose_json(p: &Pose) -> Value {
    json!({ "position": [p.position.x, p.position.y, p.position.z], "orientation": p.wxyz() })
}

/// Resolved model geometry for clients that draw the robot.
pub fn model_json(model: &RobotModel) -> Value {
    let links = model.links();
    let joints: Vec<Value> = model
        .joints()
        .iter()
        .map(|j| {
            json!({
                "name": j.name,
                "kind": match j.kind { JointKind::Revolute => "revolute", JointKind::Prismatic => "prismatic" },
                "parent": links[j.parent].name,
                "child": links[j.child].name,
                "origin": pose_json(&j.origin),
                "axis": [j.axis.x, j.axis.y, j.axis.z],
                "lower": j.lower,
                "upper": j.upper,
                "velocity": j.velocity,
                "dof": j.dof,
                "mimic": j.mimic.map(|m| json!({
                    "joint": model.dof_joint(m.dof).name,
                    "multiplier": m.multiplier,
                    "offset": m.offset,
                })),
            })
        })
        .collect();
    let link_values: Vec<Value> = links
        .iter()
        .map(|l| {
            json!({
                "name": l.name,
                "spheres": l.spheres.iter().map(|s| json!({
                    "center": [s.center.x, s.center.y, s.center.z],
                    "radius": s.radius,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let frames: serde_json::Map<String, Value> = model
        .frames()
        .iter()
        .map(|(name, f)| (name.clone(), json!({ "link": links[f.link].name, "offset": pose_json(&f.offset) })))
        .collect();
    json!({
        "name": model.name(),
        "embodiment": model.embodiment(),
        "base_link": links[model.base_link()].name,
        "dof_names": model.dof_names().collect::<Vec<_>>(),
        "rest": model.rest().as_slice(),
        "links": link_values,
        "joints": joints,
        "frames": frames,
    })
}
