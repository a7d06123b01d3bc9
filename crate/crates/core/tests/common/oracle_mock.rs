use serde_json::Value;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub type Reply = dyn Fn(&Value) -> Option<String> + Send + Sync;

/// Line-oriented TCP oracle; `reply` maps a request to the response line
/// (or `None` to stay silent). Returns the address and a request counter.
pub fn mock(reply: Arc<Reply>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let count = Arc::new(AtomicUsize::new(0));
    let c = count.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            stream.set_nodelay(true).unwrap();
            let reply = reply.clone();
            let c = c.clone();
            std::thread::spawn(move || {
                let mut w = stream.try_clone().unwrap();
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { break };
                    c.fetch_add(1, Ordering::SeqCst);
                    let req: Value = serde_json::from_str(&line).unwrap();
                    if let Some(r) = reply(&req) {
                        if writeln!(w, "{r}").is_err() {
                            break;
                        }
                    }
                }
            });
        }
    });
    (addr, count)
}

