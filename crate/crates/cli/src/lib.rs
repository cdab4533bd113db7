//! The `ssvc` command line: encode, decode, extract, inspect, eval, synth.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ssvc::codec::{decode_video, encode_video, CodecConfig};
use ssvc::container::{inspect, ChunkKind, FormatError, StreamHeader};
use ssvc::decode_api::{decode, expanded_box, DecodeMode, DecodeRequest, DecodeResult, ObjectInfo, ObjectSelector};
use ssvc::entropy::entropy_models;
use ssvc::eval::{bd_rate, bpp, ms_ssim, psnr, rd_sweep, QualityAxis, RdPoint};
use ssvc::intercode::motion_estimators;
use ssvc::io::{load_video, write_mask_png, write_motion_fields, write_png, write_y4m};
use ssvc::semantics::Annotations;
use ssvc::transform::transforms;
use ssvc::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(name = "ssvc", version, about = "Semantically structured video codec")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode a Y4M file or PNG sequence into an .ssb stream.
    Encode(EncodeArgs),
    /// Fully decode a stream to Y4M, or to PNGs when the output holds `%d`.
    Decode(DecodeArgs),
    /// Partially decode a stream into a directory.
    Extract(ExtractArgs),
    /// Check a file's structure and print its chunk map.
    Inspect(InspectArgs),
    /// Rate-distortion sweep, metric comparison, or BD-rate between two tables.
    Eval(EvalArgs),
    /// Write the bundled synthetic test clip and its annotations.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct CodecArgs {
    /// GoP length in frames.
    #[arg(long, default_value_t = 10)]
    pub gop: u8,
    /// Quality index 0..=3; higher is coarser.
    #[arg(long, default_value_t = 0)]
    pub quality: u8,
    #[arg(long, default_value = "dct16")]
    pub transform: String,
    #[arg(long, default_value = "gaussian-context")]
    pub entropy: String,
    #[arg(long, default_value = "diamond")]
    pub estimator: String,
    /// Motion search range in whole pixels.
    #[arg(long)]
    pub search_range: Option<i32>,
    /// Motion vector cost per quarter pel; defaults to twice the quantizer step.
    #[arg(long)]
    pub motion_lambda: Option<f64>,
}

impl CodecArgs {
    fn config(&self) -> Result<CodecConfig, Error> {
        let mut cfg = CodecConfig::with_strategies(&self.transform, &self.entropy, &self.estimator)?;
        cfg.gop_size = self.gop;
        cfg.quality_index = self.quality;
        cfg.motion_lambda = self.motion_lambda;
        if let Some(r) = self.search_range {
            cfg.search.range = r;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub codec: CodecArgs,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: String,
}

/// One extraction mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtractMode {
    Header,
    Object(Vec<usize>),
    Class(String),
    Background,
    Motion,
    Residual,
    Tube(usize),
    Full,
}

pub fn parse_mode(s: &str) -> Result<ExtractMode, String> {
    let (key, val) = match s.split_once('=') {
        Some((k, v)) => (k, Some(v)),
        None => (s, None),
    };
    let index = |v: Option<&str>| -> Result<usize, String> {
        v.ok_or_else(|| format!("mode '{key}' needs an index, e.g. {key}=0"))?.parse().map_err(|e| format!("bad index in '{s}': {e}"))
    };
    let bare = |m: ExtractMode| if val.is_some() { Err(format!("mode '{key}' takes no value")) } else { Ok(m) };
    match key {
        "header" => bare(ExtractMode::Header),
        "background" => bare(ExtractMode::Background),
        "motion" => bare(ExtractMode::Motion),
        "residual" => bare(ExtractMode::Residual),
        "full" => bare(ExtractMode::Full),
        "object" => {
            let v = val.ok_or("mode 'object' needs indices, e.g. object=0 or object=0,2")?;
            v.split(',').map(|k| index(Some(k))).collect::<Result<_, _>>().map(ExtractMode::Object)
        }
        "class" => match val {
            Some(v) if !v.is_empty() => Ok(ExtractMode::Class(v.to_string())),
            _ => Err("mode 'class' needs a name, e.g. class=person".into()),
        },
        "tube" => Ok(ExtractMode::Tube(index(val)?)),
        other => Err(format!("unknown mode '{other}'; expected header, object=K, class=NAME, background, motion, residual, tube=K or full")),
    }
}

/// Inclusive frame range `a..b`, or a single frame `a`.
pub fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let a: u32 = a.trim().parse().map_err(|e| format!("bad range start in '{s}': {e}"))?;
    let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("bad range end in '{s}': {e}"))?;
    if a > b {
        return Err(format!("empty range '{s}'"));
    }
    Ok((a, b))
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    pub mode: ExtractMode,
    /// Inclusive frame range `a..b`.
    #[arg(long, value_parser = parse_range)]
    pub frames: Option<(u32, u32)>,
    /// Keep every n-th selected GoP.
    #[arg(long, default_value_t = 1)]
    pub gop_step: usize,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Source video: swept over the ladder, or compared with --distorted.
    #[arg(long, required_unless_present = "bd")]
    pub input: Option<String>,
    /// Decoded video to compare against --input.
    #[arg(long, conflicts_with = "bd")]
    pub distorted: Option<String>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Quality indices of the sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub ladder: Vec<u8>,
    /// Directory for rd.tsv and regions.tsv.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    /// BD-rate of the second rd.tsv against the first.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub bd: Option<Vec<PathBuf>>,
    /// Use MS-SSIM (dB) instead of PSNR as the BD-rate quality axis.
    #[arg(long)]
    pub msssim: bool,
    #[command(flatten)]
    pub codec: CodecArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Io => 1,
        ErrorClass::Format => 2,
        ErrorClass::Capacity => 3,
        ErrorClass::NotFound => 4,
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), Error> {
    match &cli.command {
        Command::Encode(a) => cmd_encode(a, out),
        Command::Decode(a) => cmd_decode(a, out),
        Command::Extract(a) => cmd_extract(a, out),
        Command::Inspect(a) => cmd_inspect(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn w(out: &mut dyn std::io::Write, s: &str) -> Result<(), Error> {
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn kind_table(header: &StreamHeader, file_size: usize, frames: usize) -> String {
    let g = &header.global;
    let (wd, ht) = (g.width as usize, g.height as usize);
    let mut s = String::from("stream\tbytes\tbpp\tshare\n");
    let mut row = |name: &str, b: usize| {
        let _ = writeln!(s, "{name}\t{b}\t{:.6}\t{:.4}", bpp(b, wd, ht, frames), b as f64 / file_size as f64);
    };
    row("header", header.header_len);
    for k in ChunkKind::ALL {
        row(k.name(), header.entries().filter(|e| e.kind == k).map(|e| e.length as usize).sum());
    }
    row("total", file_size);
    s
}

fn cmd_encode(a: &EncodeArgs, out: &mut dyn std::io::Write) -> Result<(), Error> {
    let cfg = a.codec.config()?;
    let frames = load_video(&a.input)?;
    let ann = a.annotations.as_deref().map(Annotations::load).transpose()?;
    let enc = encode_video(&frames, ann.as_ref(), &cfg)?;
    fs::write(&a.output, &enc.bytes)?;
    let g = &enc.header.global;
    let objects: usize = enc.header.gops.iter().map(|s| s.objects.len()).sum();
    let mut s = format!(
        "encoded {} frames {}x{} {} in {} GoPs, {} objects\nfile {} bytes, {:.6} bpp\n",
        frames.len(),
        g.width,
        g.height,
        g.pixel_format.name(),
        enc.header.gops.len(),
        objects,
        enc.bytes.len(),
        bpp(enc.bytes.len(), g.width as usize, g.height as usize, frames.len())
    );
    s.push_str(&kind_table(&enc.header, enc.bytes.len(), frames.len()));
    w(out, &s)
}

fn cmd_decode(a: &DecodeArgs, out: &mut dyn std::io::Write) -> Result<(), Error> {
    let bytes = fs::read(&a.input)?;
    let frames = decode_video(&bytes)?;
    if a.output.contains('%') {
        for (i, f) in frames.iter().enumerate() {
            write_png(Path::new(&expand(&a.output, i)?), f)?;
        }
    } else {
        write_y4m(Path::new(&a.output), &frames)?;
    }
    w(out, &format!("decoded {} frames\n", frames.len()))
}

fn expand(pattern: &str, i: usize) -> Result<String, Error> {
    let start = pattern.find('%').ok_or_else(|| Error::Input("missing %d".into()))?;
    let rest = &pattern[start + 1..];
    let end = rest.find('d').ok_or_else(|| Error::Input(format!("bad pattern '{pattern}'")))?;
    let width: usize = rest[..end].trim_start_matches('0').parse().unwrap_or(0);
    Ok(format!("{}{:0width$}{}", &pattern[..start], i, &rest[end + 1..]))
}

/// Object list as tab-separated text, one object per line.
pub fn objects_text(objects: &[ObjectInfo]) -> String {
    let mut s = String::from("gop\tframe\tindex\tclass_id\tclass\tx0\ty0\tx1\ty1\tregion\n");
    for o in objects {
        let r = &o.record;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            o.gop,
            o.frame_index,
            o.index,
            r.class_id,
            o.class_name.as_deref().unwrap_or("-"),
            r.a1,
            r.b1,
            r.a2,
            r.b2,
            r.region
        );
    }
    s
}

/// Byte accounting of a decode as text.
pub fn report_text(r: &DecodeResult) -> String {
    let rep = &r.report;
    let mut s = String::new();
    let _ = writeln!(s, "header_bytes\t{}", rep.header_bytes);
    for k in ChunkKind::ALL {
        let _ = writeln!(s, "{}_bytes\t{}", k.name(), rep.kind_bytes.get(&k).copied().unwrap_or(0));
    }
    let _ = writeln!(s, "chunks_read\t{}", rep.chunks_read.len());
    let _ = writeln!(s, "bytes_read\t{}", rep.bytes_read());
    let _ = writeln!(s, "file_bytes\t{}", rep.file_size);
    let _ = writeln!(s, "fraction\t{:.6}", rep.fraction());
    s
}

pub fn request_for(a: &ExtractArgs) -> DecodeRequest {
    let mode = match &a.mode {
        ExtractMode::Header => DecodeMode::Header,
        ExtractMode::Object(k) => DecodeMode::Objects(ObjectSelector::Indices(k.clone())),
        ExtractMode::Class(n) => DecodeMode::Objects(ObjectSelector::ClassName(n.clone())),
        ExtractMode::Background => DecodeMode::Background,
        ExtractMode::Motion => DecodeMode::Motion,
        ExtractMode::Residual => DecodeMode::Residual,
        ExtractMode::Tube(k) => DecodeMode::ObjectTube(*k),
        ExtractMode::Full => DecodeMode::Full,
    };
    let mut req = DecodeRequest::new(mode).gop_step(a.gop_step);
    if let Some((s, e)) = a.frames {
        req = req.frames(s..=e);
    }
    req
}

fn cmd_extract(a: &ExtractArgs, out: &mut dyn std::io::Write) -> Result<(), Error> {
    let bytes = fs::read(&a.input)?;
    let r = decode(&bytes, &request_for(a))?;
    fs::create_dir_all(&a.output)?;
    let dir = &a.output;
    if !r.objects.is_empty() || matches!(a.mode, ExtractMode::Header) {
        fs::write(dir.join("objects.tsv"), objects_text(&r.objects))?;
    }
    for f in &r.frames {
        write_png(&dir.join(format!("frame_{:05}.png", f.frame_index)), &f.frame)?;
        write_mask_png(&dir.join(format!("mask_{:05}.png", f.frame_index)), &f.mask)?;
    }
    if let ExtractMode::Tube(k) = a.mode {
        let g = &r.header.global;
        for (o, f) in r.objects.iter().zip(&r.frames) {
            let (x0, y0, x1, y1) = expanded_box(&o.record, g.stride as usize, g.width as usize, g.height as usize);
            let crop = f.frame.crop(x0, y0, x1, y1)?;
            write_png(&dir.join(format!("tube_{:05}_object{k}.png", f.frame_index)), &crop)?;
        }
    }
    if !r.motion.is_empty() {
        let mut file = std::io::BufWriter::new(fs::File::create(dir.join("motion.bin"))?);
        write_motion_fields(&mut file, &r.motion)?;
        file.flush()?;
    }
    for (fi, res) in &r.residuals {
        write_png(&dir.join(format!("residual_{fi:05}.png")), &res.to_frame(128.0))?;
    }
    let report = report_text(&r);
    fs::write(dir.join("report.tsv"), &report)?;
    let mut s = match a.mode {
        ExtractMode::Header => objects_text(&r.objects),
        _ => String::new(),
    };
    s.push_str(&report);
    w(out, &s)
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn std::io::Write) -> Result<(), Error> {
    let bytes = fs::read(&a.input)?;
    let ins = inspect(&bytes);
    let mut s = String::new();
    if let Some(h) = &ins.header {
        let g = &h.global;
        let _ = writeln!(
            s,
            "{}x{} {} frames {} gop {} stride {} channels {} transform {} entropy {} quality {} header {} bytes",
            g.width,
            g.height,
            g.pixel_format.name(),
            g.frame_count,
            g.gop_size,
            g.stride,
            g.channels,
            g.transform_id,
            g.entropy_model_id,
            g.quality_index,
            h.header_len
        );
        s.push_str("gop\tkind\tindex\tframe\toffset\tlength\n");
        for (gi, sh) in h.gops.iter().enumerate() {
            for c in &sh.chunks {
                let _ = writeln!(s, "{gi}\t{}\t{}\t{}\t{}\t{}", c.kind, c.index, c.frame_index, c.offset, c.length);
            }
        }
    }
    if ins.is_ok() {
        s.insert_str(0, "OK\n");
        return w(out, &s);
    }
    let off = ins.first_bad_offset().unwrap_or(0);
    s.insert_str(0, &format!("INVALID\nfirst bad offset {off}\n"));
    w(out, &s)?;
    if let Some(e) = ins.error {
        return Err(Error::Format(e));
    }
    let problems: Vec<String> = ins.bad_chunks.iter().map(|(c, why)| format!("{} chunk of frame {} at offset {}: {why}", c.kind, c.frame_index, c.offset)).collect();
    Err(Error::Format(FormatError::Structure(problems.join("; "))))
}

fn read_rd_tsv(path: &Path) -> Result<Vec<RdPoint>, Error> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or_else(|| Error::Input(format!("{} is empty", path.display())))?.split('\t').collect();
    let col = |name: &str| head.iter().position(|h| *h == name).ok_or_else(|| Error::Input(format!("{} lacks a '{name}' column", path.display())));
    let (ci, cb, cp, cm) = (col("label").ok(), col("bpp")?, col("psnr_db")?, col("msssim")?);
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let num = |i: usize| -> Result<f64, Error> {
                f.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Input(format!("bad row '{l}' in {}", path.display())))
            };
            Ok(RdPoint { label: ci.and_then(|i| f.get(i)).unwrap_or(&"").to_string(), bpp: num(cb)?, psnr: num(cp)?, msssim: num(cm)? })
        })
        .collect()
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn std::io::Write) -> Result<(), Error> {
    let axis = if a.msssim { QualityAxis::MsSsimDb } else { QualityAxis::Psnr };
    if let Some(files) = &a.bd {
        let ca = read_rd_tsv(&files[0])?;
        let cb = read_rd_tsv(&files[1])?;
        return w(out, &format!("bd_rate\t{:.4}\n", bd_rate(&ca, &cb, axis)?));
    }
    let input = a.input.as_deref().ok_or_else(|| Error::Input("--input is required".into()))?;
    let frames = load_video(input)?;
    if let Some(d) = &a.distorted {
        let other = load_video(d)?;
        return w(out, &format!("psnr_db\t{:.4}\nmsssim\t{:.6}\n", psnr(&frames, &other)?, ms_ssim(&frames, &other)?));
    }
    let ann = a.annotations.as_deref().map(Annotations::load).transpose()?;
    let report = rd_sweep(&frames, ann.as_ref(), &a.ladder, &a.codec.config()?)?;
    let rd = report.rd_tsv();
    if let Some(dir) = &a.report_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rd.tsv"), &rd)?;
        fs::write(dir.join("regions.tsv"), report.regions_tsv())?;
    }
    w(out, &rd)
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn std::io::Write) -> Result<(), Error> {
    let (frames, ann) = ssvc::synth::bundled_clip();
    write_y4m(&a.output, &frames)?;
    if let Some(p) = &a.annotations {
        fs::write(p, ann.to_text())?;
    }
    w(out, &format!("wrote {} frames {}x{}\n", frames.len(), frames[0].width, frames[0].height))
}

/// Names accepted by `--transform`, `--entropy` and `--estimator`.
pub fn strategy_names() -> (Vec<&'static str>, Vec<&'static str>, Vec<&'static str>) {
    (transforms().names(), entropy_models().names(), motion_estimators().names())
}
