//! The moderation gate behind one chat-completions HTTP endpoint: POST a
//! standard request body, get the moderation model's reply back, with the
//! refusal verdict in an `X-Dipt-Verdict` header.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};

use serde::Deserialize;
use serde_json::json;

use dipt_core::safety::Moderator;
use dipt_core::{Error, Result};

use crate::verdict_str;

#[derive(Deserialize)]
struct WireRequest {
    messages: Vec<WireMessage>,
}

#[derive(Deserialize)]
struct WireMessage {
    role: String,
    content: String,
}

pub fn serve_moderation(addr: &str, moderator: &Moderator) -> Result<()> {
    let listener = TcpListener::bind(addr)
        .map_err(|e| Error::Transport(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
    println!("listening on {local}");
    std::io::stdout().flush().ok();

    // Counts moderated requests only, so malformed probes do not shift the
    // replay ids of well-formed ones.
    let mut serial = 0usize;
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::Transport(e.to_string()))?;
        if let Err(err) = handle(stream, moderator, &mut serial) {
            eprintln!("serve: {err}");
        }
    }
    Ok(())
}

fn handle(stream: TcpStream, moderator: &Moderator, serial: &mut usize) -> Result<()> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim_end().is_empty() {
            break;
        }
        if let Some(value) = line.to_ascii_lowercase().trim_end().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let mut stream = reader.into_inner();

    if method != "POST" || !path.ends_with("/chat/completions") {
        let body = json!({"error": {"message": "expected POST .../chat/completions"}});
        return respond(&mut stream, 404, "Not Found", None, &body);
    }
    let wire: WireRequest = match serde_json::from_slice(&body) {
        Ok(wire) => wire,
        Err(e) => {
            let body = json!({"error": {"message": format!("malformed request body: {e}")}});
            return respond(&mut stream, 400, "Bad Request", None, &body);
        }
    };
    let Some(prompt) = wire.messages.iter().rev().find(|m| m.role == "user") else {
        let body = json!({"error": {"message": "no user message to moderate"}});
        return respond(&mut stream, 400, "Bad Request", None, &body);
    };

    *serial += 1;
    match moderator.moderate(&format!("served/{serial}"), &prompt.content) {
        Ok(outcome) => {
            let body = json!({
                "id": format!("dipt-moderation-{serial}"),
                "object": "chat.completion",
                "model": moderator.config.model_id,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": outcome.raw},
                    "finish_reason": "stop"
                }]
            });
            respond(&mut stream, 200, "OK", Some(verdict_str(outcome.verdict)), &body)
        }
        Err(err) => {
            let body = json!({"error": {"message": err.to_string()}});
            respond(&mut stream, 502, "Bad Gateway", None, &body)
        }
    }
}

fn respond(
    stream: &mut TcpStream,
    status: u16,
    reason: &str,
    verdict: Option<&str>,
    body: &serde_json::Value,
) -> Result<()> {
    let body = serde_json::to_string(body).expect("response body serializes");
    let mut head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
        body.len()
    );
    if let Some(verdict) = verdict {
        head.push_str(&format!("X-Dipt-Verdict: {verdict}\r\n"));
    }
    head.push_str("\r\n");
    stream.write_all(head.as_bytes())?;
    stream.write_all(body.as_bytes())?;
    stream.flush()?;
    Ok(())
}
