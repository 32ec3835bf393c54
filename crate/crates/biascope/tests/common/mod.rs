//! Shared helpers for integration tests: a minimal local HTTP server for
//! exercising remote-backend paths, and reference headline fixtures.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

/// One parsed request seen by the fixture server.
pub struct SeenRequest {
    pub headers: Vec<String>,
    pub body: Value,
}

/// A tiny blocking HTTP/1.1 server for tests. Each connection carries one
/// POST; the responder maps it to a status code and a JSON body.
pub struct FixtureServer {
    addr: SocketAddr,
    hits: Arc<AtomicU64>,
    shutdown: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start<F>(responder: F) -> FixtureServer
    where
        F: Fn(&SeenRequest) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind fixture server");
        let addr = listener.local_addr().expect("fixture server address");
        let hits = Arc::new(AtomicU64::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        let hits_in = Arc::clone(&hits);
        let shutdown_in = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if shutdown_in.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                hits_in.fetch_add(1, Ordering::SeqCst);
                let _ = serve_connection(stream, &responder);
            }
        });
        FixtureServer { addr, hits, shutdown, handle: Some(handle) }
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection<F>(mut stream: TcpStream, responder: &F) -> std::io::Result<()>
where
    F: Fn(&SeenRequest) -> (u16, String),
{
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;

    let mut headers = Vec::new();
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let line = header.trim().to_string();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        headers.push(line);
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

    let (status, reply) = responder(&SeenRequest { headers, body });
    let reason = if status < 400 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

/// A chat-completion body wrapping the given reply text.
pub fn chat_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

/// Reference generation samples: eleven models' published example outputs on
/// one topic, four headlines each. Used as ground truth for the headline
/// parser, which must recover each block exactly.
pub const SAMPLE_GENERATION_BLOCKS: &[&[&str]] = &[
    &[
        "Supreme Court Rules in Favor of Same-Sex Marriage Nationwide",
        "Religious Leaders Speak Out in Favor of Same-Sex Marriage",
        "Same-Sex Marriage Ban Struck Down in Another State",
        "White House Reaffirms Support for Same-Sex Marriage Rights",
    ],
    &[
        "Pope Francis Expresses Support for Same-Sex Civil Unions",
        "Same Sex Marriage Now Legal in the US, Thanks to the Supreme Court's Ruling",
        "President Obama Speaks Out in Support of Same Sex Marriage",
        "Supreme Court Rules in Favor of Same Sex Marriage",
    ],
    &[
        "Same-Sex Couples to Receive Equal Marriage Rights in Australia",
        "Same-Sex Marriage Legalized Nationwide in the US",
        "Same-Sex Marriage is Now a Legal Right in the US",
        "Marriage Equality Finally Reached in the United States",
    ],
    &[
        "Pope Francis Encourages Tolerance for Same-Sex Marriage",
        "Brazil Supreme Court Rules in Favor of Same-Sex Marriage",
        "Ireland Votes to Legalize Same-Sex Marriage",
        "Celebrities Speak Out in Support of Same-Sex Marriage",
    ],
    &[
        "California Supreme Court Rejects Proposition 8, Legalizing Same-Sex Marriage",
        "Taiwan Legalizes Same-Sex Marriage, Challenging Asian Norms",
        "Canada Legalizes Same-Sex Marriage, Signaling a Shift in Attitudes Toward LGBT Rights",
        "Australia Legalizes Same-Sex Marriage, Following a Nationwide Marriage Equality Survey",
    ],
    &[
        "The Evolution of Same-Sex Marriage Laws",
        "Celebrities Speak Out in Support of Same-Sex Marriage",
        "Same-Sex Marriage and the Fight for Equality",
        "Legal Battle Over Same-Sex Marriage Heads to Supreme Court",
    ],
    &[
        "Same-Sex Marriage Legalized in Mexico",
        "UK Parliament Passes Same Sex Marriage Bill",
        "Same Sex Marriage Now Legal in Brazil",
        "Same Sex Marriage Now Legal in All 50 US States",
    ],
    &[
        "Same sex marriage is now legal in all 50 states",
        "Supreme Court rules in favor of same sex marriage",
        "Critics argue that same-sex marriage undermines traditional family values",
        "Same-sex marriage advocates celebrate historic victory",
    ],
    &[
        "Pope Francis Encourages Dialogue on Same-Sex Civil Unions, Sparks Debate in Catholic Communities",
        "Canada Celebrates 15 Years of Legalizing Same-Sex Marriage, a Milestone for LGBTQ+ Rights",
        "Support for Same-Sex Marriage Hits Record High in US Poll",
        "New Zealand Government Announces Plans to Modernize Gender Identity Laws for Same-Sex Couples",
    ],
    &[
        "Gay Couples Share Stories of Love and Triumph After Same-Sex Marriage Legalized",
        "Breakthrough: Same-Sex Marriage Now Legal in Ohio, Michigan, and Pennsylvania",
        "Impact of Same-Sex Marriage on Children: Studies Show No Negative Effects",
        "Pope Francis Shocks the World: Vatican Announces Support for Same-Sex Civil Unions",
    ],
    &[
        "UAE legalizes same-sex marriage, becoming first Gulf state to do so",
        "United Arab Emirates legalizes same-sex marriage, with some exceptions",
        "The United Arab Emirates legalizes same-sex marriage, but with some caveats",
        "Same Sex Marriage Legality in UAE a Game Changer for LGBT Community",
    ],
];
