use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{Level, LevelFilter, Log, Metadata, Record};

/// Logs to stderr and appends timestamped lines to the run's `log.txt`.
/// Timestamps appear only in the file so other outputs stay reproducible.
struct RunLogger {
    file: Mutex<Option<File>>,
}

static LOGGER: RunLogger = RunLogger { file: Mutex::new(None) };

impl Log for RunLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Info
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        eprintln!("{:<5} {}", record.level(), record.args());
        if let Some(f) = self.file.lock().expect("logger lock").as_mut() {
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
            let _ = writeln!(
                f,
                "{}.{:03} {:<5} {}",
                ts.as_secs(),
                ts.subsec_millis(),
                record.level(),
                record.args()
            );
        }
    }

    fn flush(&self) {
        if let Some(f) = self.file.lock().expect("logger lock").as_mut() {
            let _ = f.flush();
        }
    }
}

/// Installs the logger once; stderr only until [`attach_file`] is called.
pub fn init() {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(LevelFilter::Info);
    }
}

pub fn attach_file(path: &Path) -> std::io::Result<()> {
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    *LOGGER.file.lock().expect("logger lock") = Some(f);
    Ok(())
}
