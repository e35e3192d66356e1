//! Deterministic stand-in backend speaking the subprocess protocol.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use clustop_core::enhance::{Backend, FinetuneParams, FixtureBackend};

#[derive(Debug, Parser)]
#[command(name = "clustop-fixture-backend", version)]
struct Args {
    /// Print the protocol handshake and exit.
    #[arg(long)]
    capabilities: bool,
    #[command(subcommand)]
    op: Option<Op>,
}

#[derive(Debug, Subcommand)]
enum Op {
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    Attn {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    Finetune {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        epochs: u32,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        batch: usize,
        #[arg(long)]
        out_model: PathBuf,
    },
}

fn main() {
    let args = Args::parse();
    let b = FixtureBackend;
    let result = match (args.capabilities, args.op) {
        (true, _) => b
            .capabilities()
            .map(|c| println!("{}", serde_json::to_string(&c).expect("capabilities serialize"))),
        (false, Some(Op::Embed { corpus, model, out })) => b.embed(&corpus, &model, &out),
        (false, Some(Op::Attn { corpus, model, out })) => b.attn(&corpus, &model, &out),
        (false, Some(Op::Finetune { corpus, labels, model, epochs, lr, batch, out_model })) => {
            b.finetune(&corpus, &labels, &model, &FinetuneParams { epochs, lr, batch }, &out_model)
        }
        (false, None) => {
            eprintln!("expected --capabilities or a subcommand");
            std::process::exit(2);
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
