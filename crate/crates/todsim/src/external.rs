//! Transports for external generators: a child process speaking the line
//! protocol on stdin/stdout, or a TCP server doing the same.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use todsim_core::generator::protocol::Transport;
use todsim_core::GeneratorError;

/// Where an external generator lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// Program and arguments, split on whitespace.
    Exec(Vec<String>),
    Tcp(String),
}

impl Endpoint {
    /// `exec:<program> [args...]` or `tcp:<host>:<port>`.
    pub fn parse(s: &str) -> Option<Self> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            (!argv.is_empty()).then_some(Endpoint::Exec(argv))
        } else {
            s.strip_prefix("tcp:")
                .filter(|a| a.contains(':'))
                .map(|a| Endpoint::Tcp(a.to_string()))
        }
    }

    pub fn connect(&self, timeout: Duration) -> Result<Box<dyn Transport + Send>, GeneratorError> {
        match self {
            Endpoint::Exec(argv) => Ok(Box::new(ProcessTransport::spawn(argv, timeout)?)),
            Endpoint::Tcp(addr) => Ok(Box::new(TcpTransport::connect(addr, timeout)?)),
        }
    }
}

/// Child process; replies are read on a helper thread so that a silent
/// child turns into a timeout instead of a hang.
pub struct ProcessTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ProcessTransport {
    pub fn spawn(argv: &[String], timeout: Duration) -> Result<Self, GeneratorError> {
        let (program, args) = argv.split_first().ok_or_else(|| GeneratorError::Io("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| GeneratorError::Io(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().ok_or_else(|| GeneratorError::Io("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| GeneratorError::Io("no stdout".into()))?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }
}

impl Transport for ProcessTransport {
    fn exchange(&mut self, line: &str) -> Result<String, GeneratorError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| GeneratorError::Exited(e.to_string()))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(GeneratorError::Io(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(GeneratorError::Timeout(self.timeout.as_millis() as u64)),
            Err(RecvTimeoutError::Disconnected) => Err(GeneratorError::Exited("stdout closed".into())),
        }
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    timeout: Duration,
}

impl TcpTransport {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, GeneratorError> {
        let stream = TcpStream::connect(addr).map_err(|e| GeneratorError::Io(format!("{addr}: {e}")))?;
        stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| GeneratorError::Io(e.to_string()))?;
        let writer = stream.try_clone().map_err(|e| GeneratorError::Io(e.to_string()))?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
            timeout,
        })
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, line: &str) -> Result<String, GeneratorError> {
        writeln!(self.writer, "{line}").map_err(|e| GeneratorError::Exited(e.to_string()))?;
        let mut reply = String::new();
        match self.reader.read_line(&mut reply) {
            Ok(0) => Err(GeneratorError::Exited("connection closed".into())),
            Ok(_) => Ok(reply),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Err(GeneratorError::Timeout(self.timeout.as_millis() as u64))
            }
            Err(e) => Err(GeneratorError::Io(e.to_string())),
        }
    }
}

/// Lets a boxed transport drive an [`todsim_core::generator::protocol::ExternalGenerator`].
pub struct BoxedTransport(pub Box<dyn Transport + Send>);

impl Transport for BoxedTransport {
    fn exchange(&mut self, line: &str) -> Result<String, GeneratorError> {
        self.0.exchange(line)
    }
}
