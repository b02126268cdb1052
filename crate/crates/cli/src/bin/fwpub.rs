//! Publish a firmware image into an on-disk repository.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ed25519_dalek::SigningKey;
use fwup_core::naming::BaseName;
use fwup_core::vendor::{
    build_manifest, prepare_chunks, FirmwareImage, Psk, Repository, TruncLen, VendorError,
};

#[derive(Parser, Debug)]
#[command(
    version,
    about = "Sign, chunk and tag a firmware image and add it to a repository"
)]
struct Args {
    /// Raw firmware image.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    deployment: String,
    #[arg(long)]
    vendor: String,
    /// Device class the image targets.
    #[arg(long)]
    class: String,
    #[arg(long)]
    epoch: u64,
    #[arg(long, default_value_t = 32)]
    chunk_size: u32,
    /// Pre-shared key for chunk tags, used byte for byte.
    #[arg(long)]
    psk_file: PathBuf,
    /// Ed25519 secret key: 32 raw bytes or 64 hex digits.
    #[arg(long)]
    key_file: PathBuf,
    /// Tag bytes per chunk (8, 16 or 32).
    #[arg(long, default_value_t = 8)]
    tag_len: usize,
    /// Repository root; created if missing.
    #[arg(long)]
    repo: PathBuf,
}

enum Failure {
    Invalid(String),
    Io(String),
}

impl From<VendorError> for Failure {
    fn from(e: VendorError) -> Self {
        match e {
            VendorError::Io(_) => Failure::Io(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

fn read(path: &PathBuf, what: &str) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("{what} {}: {e}", path.display())))
}

fn signing_key(bytes: &[u8]) -> Result<SigningKey, Failure> {
    let seed: Vec<u8> = if bytes.len() == 32 {
        bytes.to_vec()
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Failure::Invalid("key file is neither 32 raw bytes nor hex".into()))?;
        hex::decode(text.trim()).map_err(|e| Failure::Invalid(format!("key file: {e}")))?
    };
    let seed: [u8; 32] = seed.try_into().map_err(|v: Vec<u8>| {
        Failure::Invalid(format!("key must be 32 bytes, found {}", v.len()))
    })?;
    Ok(SigningKey::from_bytes(&seed))
}

fn publish(args: &Args) -> Result<serde_json::Value, Failure> {
    let base = BaseName::new(&args.deployment, &args.vendor, &args.class, args.epoch)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    let trunc = TruncLen::new(args.tag_len)?;
    let psk = read(&args.psk_file, "PSK file")?;
    if psk.is_empty() {
        return Err(Failure::Invalid("PSK file is empty".into()));
    }
    let key = signing_key(&read(&args.key_file, "key file")?)?;
    let image = FirmwareImage::new(base.clone(), read(&args.image, "image")?);

    let mut repo = if args.repo.exists() {
        Repository::load(&args.repo)?
    } else {
        Repository::new()
    };
    let manifest = build_manifest(&image, args.chunk_size, &key)?;
    let chunks = prepare_chunks(&image, args.chunk_size, &Psk::new(psk), trunc)?;
    let summary = serde_json::json!({
        "base": base.to_string(),
        "image_size": manifest.image_size,
        "chunk_size": manifest.chunk_size,
        "chunk_count": manifest.chunk_count,
        "tag_len": trunc.get(),
        "image_digest": hex::encode(manifest.image_digest),
        "verifying_key": hex::encode(key.verifying_key().as_bytes()),
    });
    repo.publish(manifest, chunks)?;
    let dir = repo.save_publication(&args.repo, &base)?;
    let mut summary = summary;
    summary["directory"] = dir.display().to_string().into();
    Ok(summary)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match publish(&args) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("JSON value")
            );
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("fwpub: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("fwpub: {msg}");
            ExitCode::from(1)
        }
    }
}
