pub mod cost;
pub mod evaluate;
pub mod ingest;
pub mod monitor;
pub mod report;
pub mod select;
pub mod simulate;
pub mod sweep;

use std::io::{ErrorKind, Write};

/// Prints a summary and stores the same text in the output directory.
pub(crate) fn emit_summary(out: &crate::OutputDir, name: &str, text: &str) -> anyhow::Result<()> {
    out.write_text(name, text)?;
    print_stdout(text)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
pub(crate) fn print_stdout(text: &str) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
