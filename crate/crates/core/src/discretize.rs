//! Multi-scale ShapeSentence transformation: segment each channel into
//! non-overlapping windows and replace every window by its nearest ShapeWord
//! token.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::kmeans::squared_distance;
use crate::vocab::{ShapeWordEntry, Vocabulary};

/// Token rows (one per variable) for one sample at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSentence {
    pub scale: usize,
    pub sample_id: String,
    pub label: usize,
    pub tokens: Vec<Vec<usize>>,
}

impl ShapeSentence {
    pub fn len(&self) -> usize {
        self.tokens.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One sample's sentences, ordered like [`MultiScaleCorpus::scales`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: String,
    pub label: usize,
    pub sentences: Vec<ShapeSentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleCorpus {
    pub scales: Vec<usize>,
    pub vocab_fingerprint: String,
    pub words_per_block: usize,
    pub channel_count: usize,
    pub class_count: usize,
    pub entries: Vec<CorpusEntry>,
}

impl MultiScaleCorpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn present_classes(&self) -> usize {
        let mut seen = vec![false; self.class_count];
        for e in &self.entries {
            seen[e.label] = true;
        }
        seen.into_iter().filter(|s| *s).count()
    }

    /// Keeps only the listed scales, in the given order.
    pub fn restrict_scales(&self, scales: &[usize]) -> Result<MultiScaleCorpus> {
        let idx: Vec<usize> = scales
            .iter()
            .map(|l| {
                self.scales.iter().position(|s| s == l).ok_or_else(|| {
                    Error::Config(format!("scale {l} not in corpus scales {:?}", self.scales))
                })
            })
            .collect::<Result<_>>()?;
        Ok(MultiScaleCorpus {
            scales: scales.to_vec(),
            entries: self
                .entries
                .iter()
                .map(|e| CorpusEntry {
                    id: e.id.clone(),
                    label: e.label,
                    sentences: idx.iter().map(|&i| e.sentences[i].clone()).collect(),
                })
                .collect(),
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> MultiScaleCorpus {
        MultiScaleCorpus {
            scales: self.scales.clone(),
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            words_per_block: self.words_per_block,
            channel_count: self.channel_count,
            class_count: self.class_count,
            entries: Vec::new(),
        }
    }
}

/// Consecutive non-overlapping windows of length `len`; the trailing
/// remainder is dropped.
pub fn segment(channel: &[f64], len: usize) -> Result<Vec<&[f64]>> {
    if len == 0 || len > channel.len() {
        return Err(Error::Shape(format!(
            "segment length {len} must be in 1..={}",
            channel.len()
        )));
    }
    Ok(channel.chunks_exact(len).collect())
}

/// Token of the nearest centroid in `block`; ties go to the smaller token.
pub fn nearest_word(segment: &[f64], block: &[&ShapeWordEntry]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for e in block {
        if e.centroid.len() != segment.len() {
            return Err(Error::Shape(format!(
                "segment of length {} against ShapeWord of length {}",
                segment.len(),
                e.centroid.len()
            )));
        }
        let d = squared_distance(segment, &e.centroid);
        match best {
            Some((tok, bd)) if d > bd || (d == bd && tok < e.token) => {}
            _ => best = Some((e.token, d)),
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::Shape("empty ShapeWord block".into()))
}

/// Blocks indexed `[variable]` for one scale, each ordered by token.
fn blocks_for_scale(vocab: &Vocabulary, scale: usize) -> Result<Vec<Vec<&ShapeWordEntry>>> {
    if vocab.scale_index(scale).is_none() {
        return Err(Error::Config(format!(
            "scale {scale} not in vocabulary scales {:?}",
            vocab.scales
        )));
    }
    Ok((0..vocab.channel_count)
        .map(|v| vocab.block(v, scale))
        .collect())
}

fn discretize_with_blocks(
    sample: &Sample,
    blocks: &[Vec<&ShapeWordEntry>],
    scale: usize,
) -> Result<ShapeSentence> {
    if sample.channel_count() != blocks.len() {
        return Err(Error::Shape(format!(
            "sample {} has {} channels, vocabulary has {}",
            sample.id,
            sample.channel_count(),
            blocks.len()
        )));
    }
    let tokens = sample
        .channels
        .iter()
        .zip(blocks)
        .map(|(ch, block)| {
            segment(ch, scale)?
                .into_iter()
                .map(|seg| nearest_word(seg, block))
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapeSentence {
        scale,
        sample_id: sample.id.clone(),
        label: sample.label,
        tokens,
    })
}

pub fn discretize_sample(sample: &Sample, vocab: &Vocabulary, scale: usize) -> Result<ShapeSentence> {
    let blocks = blocks_for_scale(vocab, scale)?;
    discretize_with_blocks(sample, &blocks, scale)
}

/// Discretizes every sample at every requested scale.
pub fn mst(ds: &Dataset, vocab: &Vocabulary, scales: &[usize]) -> Result<MultiScaleCorpus> {
    if scales.is_empty() {
        return Err(Error::Config("at least one scale is required".into()));
    }
    let blocks: Vec<Vec<Vec<&ShapeWordEntry>>> = scales
        .iter()
        .map(|&l| blocks_for_scale(vocab, l))
        .collect::<Result<_>>()?;
    let one = |s: &Sample| -> Result<CorpusEntry> {
        let sentences = scales
            .iter()
            .zip(&blocks)
            .map(|(&l, b)| discretize_with_blocks(s, b, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(CorpusEntry {
            id: s.id.clone(),
            label: s.label,
            sentences,
        })
    };
    #[cfg(feature = "parallel")]
    let entries = {
        use rayon::prelude::*;
        ds.samples().par_iter().map(one).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let entries = ds.samples().iter().map(one).collect::<Result<Vec<_>>>()?;
    Ok(MultiScaleCorpus {
        scales: scales.to_vec(),
        vocab_fingerprint: vocab.fingerprint(),
        words_per_block: vocab.words_per_block,
        channel_count: vocab.channel_count,
        class_count: ds.class_count(),
        entries,
    })
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    vocab_fingerprint: String,
    scales: Vec<usize>,
    words_per_block: usize,
    channel_count: usize,
    class_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: String,
    label: usize,
    scales: BTreeMap<String, Vec<Vec<usize>>>,
}

/// Writes the corpus as JSON Lines: a header line, then one line per sample.
pub fn write_corpus<W: Write>(
    corpus: &MultiScaleCorpus,
    meta: Option<&serde_json::Value>,
    mut out: W,
) -> Result<()> {
    let header = CorpusHeader {
        vocab_fingerprint: corpus.vocab_fingerprint.clone(),
        scales: corpus.scales.clone(),
        words_per_block: corpus.words_per_block,
        channel_count: corpus.channel_count,
        class_count: corpus.class_count,
        meta: meta.cloned(),
    };
    let io = |e| Error::io("<corpus output>", e);
    writeln!(out, "{}", serde_json::to_string(&header)?).map_err(io)?;
    for e in &corpus.entries {
        let line = CorpusLine {
            id: e.id.clone(),
            label: e.label,
            scales: e
                .sentences
                .iter()
                .map(|s| (s.scale.to_string(), s.tokens.clone()))
                .collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?).map_err(io)?;
    }
    Ok(())
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<MultiScaleCorpus> {
    let mut lines = reader.lines().enumerate().filter(|(_, l)| {
        l.as_ref().map_or(true, |s| !s.trim().is_empty())
    });
    let parse_err = |line: usize, e: &dyn std::fmt::Display| Error::Parse {
        line,
        message: e.to_string(),
    };
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        line: 0,
        message: "empty corpus file".into(),
    })?;
    let first = first.map_err(|e| parse_err(1, &e))?;
    let header: CorpusHeader = serde_json::from_str(&first).map_err(|e| parse_err(1, &e))?;
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, &e))?;
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| parse_err(lineno, &e))?;
        if rec.label >= header.class_count {
            return Err(parse_err(lineno, &format!("label {} out of range", rec.label)));
        }
        let mut scales = rec.scales;
        let sentences = header
            .scales
            .iter()
            .map(|&l| {
                let tokens = scales
                    .remove(&l.to_string())
                    .ok_or_else(|| parse_err(lineno, &format!("missing scale {l}")))?;
                if tokens.len() != header.channel_count {
                    return Err(Error::Shape(format!(
                        "line {lineno}: {} token rows for {} channels",
                        tokens.len(),
                        header.channel_count
                    )));
                }
                if tokens.iter().flatten().any(|&t| t >= header.words_per_block) {
                    return Err(Error::Index(format!(
                        "line {lineno}: token outside 0..{}",
                        header.words_per_block
                    )));
                }
                Ok(ShapeSentence {
                    scale: l,
                    sample_id: rec.id.clone(),
                    label: rec.label,
                    tokens,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(CorpusEntry {
            id: rec.id,
            label: rec.label,
            sentences,
        });
    }
    Ok(MultiScaleCorpus {
        scales: header.scales,
        vocab_fingerprint: header.vocab_fingerprint,
        words_per_block: header.words_per_block,
        channel_count: header.channel_count,
        class_count: header.class_count,
        entries,
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<MultiScaleCorpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file))
}

/// Counts tokens that are not the nearest centroid of their segment, and
/// sentences whose length breaks `floor(n / l)`.
pub fn count_violations(ds: &Dataset, vocab: &Vocabulary, corpus: &MultiScaleCorpus) -> usize {
    let mut bad = 0;
    for (sample, entry) in ds.samples().iter().zip(&corpus.entries) {
        for sentence in &entry.sentences {
            let l = sentence.scale;
            for (v, row) in sentence.tokens.iter().enumerate() {
                if row.len() != sample.len() / l {
                    bad += 1;
                    continue;
                }
                let block = vocab.block(v, l);
                for (g, &tok) in row.iter().enumerate() {
                    let seg = &sample.channels[v][g * l..(g + 1) * l];
                    let own = squared_distance(seg, &block[tok].centroid);
                    if block.iter().any(|e| squared_distance(seg, &e.centroid) < own) {
                        bad += 1;
                    }
                }
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(token: usize, variable: usize, centroid: Vec<f64>) -> ShapeWordEntry {
        ShapeWordEntry {
            token,
            variable,
            scale: centroid.len(),
            centroid,
            member_count: 1,
        }
    }

    #[test]
    fn segment_counts() {
        let ch = vec![0.0; 105];
        assert_eq!(segment(&ch[..100], 10).unwrap().len(), 10);
        assert_eq!(segment(&ch, 10).unwrap().len(), 10);
        let ten: Vec<f64> = (0..10).map(f64::from).collect();
        let whole = segment(&ten, 10).unwrap();
        assert_eq!(whole, vec![ten.as_slice()]);
        assert!(segment(&ten, 11).is_err());
    }

    #[test]
    fn nearest_word_cases() {
        let block: Vec<ShapeWordEntry> = (0..5).map(|t| entry(t, 0, vec![t as f64, 0.0])).collect();
        let refs: Vec<&ShapeWordEntry> = block.iter().collect();
        assert_eq!(nearest_word(&[3.0, 0.0], &refs).unwrap(), 3);

        let tie = [entry(0, 0, vec![0.0]), entry(1, 0, vec![1.0])];
        let tie_refs: Vec<&ShapeWordEntry> = tie.iter().rev().collect();
        assert_eq!(nearest_word(&[0.5], &tie_refs).unwrap(), 0);
        assert_eq!(nearest_word(&[0.9], &tie_refs).unwrap(), 1);
        assert!(matches!(nearest_word(&[0.5, 0.5], &tie_refs), Err(Error::Shape(_))));
    }

    fn toy_vocab() -> Vocabulary {
        Vocabulary {
            scales: vec![2],
            channel_count: 1,
            words_per_block: 2,
            entries: vec![entry(0, 0, vec![0.0, 0.0]), entry(1, 0, vec![1.0, -1.0])],
        }
    }

    #[test]
    fn exact_segments_map_to_their_tokens() {
        let s = Sample {
            id: "x".into(),
            label: 0,
            channels: vec![vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 7.0]],
        };
        let sent = discretize_sample(&s, &toy_vocab(), 2).unwrap();
        assert_eq!(sent.tokens, vec![vec![1, 0, 1]]);
        assert!(matches!(
            discretize_sample(&s, &toy_vocab(), 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn corpus_file_round_trip() {
        let ds = Dataset::new(
            vec![Sample {
                id: "x".into(),
                label: 1,
                channels: vec![vec![1.0, -1.0, 0.0, 0.1]],
            }],
            2,
        )
        .unwrap();
        let corpus = mst(&ds, &toy_vocab(), &[2]).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, None, &mut buf).unwrap();
        let back = parse_corpus(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(count_violations(&ds, &toy_vocab(), &corpus), 0);
    }
}
