use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use breeze_core::signal::Signal;
use serde::Serialize;

fn is_stdio(p: &Option<PathBuf>) -> Option<&Path> {
    p.as_deref().filter(|p| p.as_os_str() != "-")
}

pub fn open_input(p: &Option<PathBuf>) -> Result<Box<dyn BufRead>> {
    Ok(match is_stdio(p) {
        Some(path) => Box::new(BufReader::new(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
        )),
        None => Box::new(BufReader::new(io::stdin())),
    })
}

pub fn open_output(p: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match is_stdio(p) {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn open_append(p: &Option<PathBuf>) -> Result<Box<dyn Write + Send>> {
    Ok(match is_stdio(p) {
        Some(path) => Box::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?,
        ),
        None => Box::new(io::stdout()),
    })
}

pub fn read_text(p: &Option<PathBuf>) -> Result<String> {
    let mut s = String::new();
    open_input(p)?.read_to_string(&mut s).context("reading input")?;
    Ok(s)
}

pub fn read_signal(p: &Option<PathBuf>) -> Result<Signal> {
    Signal::read(open_input(p)?).context("reading stream")
}

pub fn write_json_line<W: Write + ?Sized, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
