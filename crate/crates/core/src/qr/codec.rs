//! Byte-mode encoding and decoding of whole symbols.

use super::layout::{all_format_words, draw_format, format_positions, Layout};
use super::matrix::{penalty_score, ModuleMatrix};
use super::rs;
use super::spec::{EcLevel, MaskChoice, QrSpec};
use crate::error::{DecodeStage, Error, Result};

const MODE_BYTE: u32 = 0b0100;
const PAD_BYTES: [u8; 2] = [0xec, 0x11];

struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { bytes: Vec::new(), len: 0 }
    }

    fn push(&mut self, value: u32, bits: usize) {
        for i in (0..bits).rev() {
            if self.len % 8 == 0 {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> (self.len % 8);
            }
            self.len += 1;
        }
    }
}

/// Data codewords (before error correction) for `message` in byte mode.
///
/// Layout: mode indicator, character count, payload, up to four terminator bits,
/// zero fill to a byte boundary, then alternating 0xEC/0x11 pad bytes.
pub fn data_codewords(message: &[u8], spec: &QrSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    let capacity = spec.byte_capacity();
    if message.len() > capacity {
        return Err(Error::Capacity { len: message.len(), capacity });
    }
    let total_bits = 8 * spec.data_codewords();
    let mut w = BitWriter::new();
    w.push(MODE_BYTE, 4);
    w.push(message.len() as u32, spec.char_count_bits());
    for &b in message {
        w.push(b as u32, 8);
    }
    w.push(0, (total_bits - w.len).min(4));
    let fill = (8 - w.len % 8) % 8;
    w.push(0, fill);
    let mut bytes = w.bytes;
    let mut i = 0;
    while bytes.len() < spec.data_codewords() {
        bytes.push(PAD_BYTES[i % 2]);
        i += 1;
    }
    Ok(bytes)
}

/// Index of the first data codeword that is pure padding (0xEC/0x11 filler).
pub fn first_pad_codeword(message_len: usize, spec: &QrSpec) -> usize {
    let used_bits = 4 + spec.char_count_bits() + 8 * message_len;
    let with_terminator = (used_bits + 4).min(8 * spec.data_codewords());
    with_terminator.div_ceil(8)
}

/// Split data codewords into blocks and append parity to each.
pub fn encode_blocks(data: &[u8], spec: &QrSpec) -> Result<Vec<Vec<u8>>> {
    if data.len() != spec.data_codewords() {
        return Err(Error::Parameter(format!(
            "expected {} data codewords, got {}",
            spec.data_codewords(),
            data.len()
        )));
    }
    let mut out = Vec::new();
    let mut offset = 0;
    for shape in spec.blocks() {
        out.push(rs::rs_encode(&data[offset..offset + shape.data], shape.parity())?);
        offset += shape.data;
    }
    Ok(out)
}

/// Interleaving map: for each position of the transmitted stream, `(block, offset)`.
pub fn interleave_map(spec: &QrSpec) -> Vec<(usize, usize)> {
    let blocks = spec.blocks();
    let max_data = blocks.iter().map(|b| b.data).max().unwrap_or(0);
    let parity = blocks.first().map(|b| b.parity()).unwrap_or(0);
    let mut map = Vec::with_capacity(spec.total_codewords());
    for i in 0..max_data {
        for (bi, b) in blocks.iter().enumerate() {
            if i < b.data {
                map.push((bi, i));
            }
        }
    }
    for i in 0..parity {
        for (bi, b) in blocks.iter().enumerate() {
            map.push((bi, b.data + i));
        }
    }
    map
}

pub fn interleave(blocks: &[Vec<u8>], spec: &QrSpec) -> Vec<u8> {
    interleave_map(spec).into_iter().map(|(b, o)| blocks[b][o]).collect()
}

pub fn deinterleave(stream: &[u8], spec: &QrSpec) -> Vec<Vec<u8>> {
    let mut blocks: Vec<Vec<u8>> = spec.blocks().iter().map(|b| vec![0; b.total]).collect();
    for (&byte, (b, o)) in stream.iter().zip(interleave_map(spec)) {
        blocks[b][o] = byte;
    }
    blocks
}

/// Unmasked matrix: function patterns drawn (format bits for `mask`) and the
/// interleaved codeword stream placed in the data area.
fn place_stream(stream: &[u8], layout: &Layout, ec: EcLevel, mask: u8) -> ModuleMatrix {
    let n = layout.n;
    let mut values = layout.base.clone();
    for (i, (r, c)) in layout.placement_order().into_iter().enumerate() {
        let dark = i < stream.len() * 8 && (stream[i / 8] >> (7 - i % 8)) & 1 == 1;
        values[r * n + c] = (!dark) as u8;
    }
    draw_format(&mut values, n, ec, mask);
    ModuleMatrix::from_parts(n, values, layout.function_mask()).expect("layout sized matrix")
}

/// Assemble a symbol from already-chosen data codewords.
pub fn build_from_data(data: &[u8], spec: &QrSpec) -> Result<ModuleMatrix> {
    let blocks = encode_blocks(data, spec)?;
    let stream = interleave(&blocks, spec);
    let layout = Layout::new(spec.version);
    let build = |mask: u8| {
        let mut m = place_stream(&stream, &layout, spec.ec_level, mask);
        m.apply_mask(&layout, mask);
        m
    };
    Ok(match spec.mask {
        MaskChoice::Fixed(mask) => build(mask),
        MaskChoice::Auto => {
            (0..8u8).map(build).min_by_key(penalty_score).expect("eight candidates")
        }
    })
}

/// Encode `message` in byte mode into a full symbol.
pub fn build_matrix(message: &[u8], spec: &QrSpec) -> Result<ModuleMatrix> {
    let data = data_codewords(message, spec)?;
    build_from_data(&data, spec)
}

/// Read the format information; returns `(ec_level, mask)`.
///
/// Each copy is matched to the nearest valid format word; up to three bit errors are
/// corrected.
pub fn read_format(matrix: &ModuleMatrix) -> Result<(EcLevel, u8)> {
    let n = matrix.n();
    let words = all_format_words();
    let mut best: Option<(u32, EcLevel, u8)> = None;
    for copy in format_positions(n) {
        let mut read = 0u16;
        for (i, (r, c)) in copy.into_iter().enumerate() {
            if matrix.is_dark(r, c) {
                read |= 1 << i;
            }
        }
        for &(word, ec, mask) in &words {
            let dist = (word ^ read).count_ones();
            if best.is_none_or(|b| dist < b.0) {
                best = Some((dist, ec, mask));
            }
        }
    }
    match best {
        Some((dist, ec, mask)) if dist <= 3 => Ok((ec, mask)),
        _ => Err(Error::decode(DecodeStage::FormatInfo, "no format word within distance 3")),
    }
}

/// Interleaved codeword stream read from a matrix with the given mask removed.
pub fn read_stream(matrix: &ModuleMatrix, spec: &QrSpec, mask: u8) -> Vec<u8> {
    let layout = Layout::new(spec.version);
    let mut unmasked = matrix.clone();
    unmasked.apply_mask(&layout, mask);
    let mut stream = vec![0u8; spec.total_codewords()];
    for (i, (r, c)) in layout.placement_order().into_iter().enumerate().take(stream.len() * 8) {
        if unmasked.is_dark(r, c) {
            stream[i / 8] |= 0x80 >> (i % 8);
        }
    }
    stream
}

/// Result of a successful symbol decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedMessage {
    pub message: Vec<u8>,
    pub ec_level: EcLevel,
    pub mask: u8,
    /// Corrected bytes per block.
    pub corrections: Vec<usize>,
}

/// Full decode: format info, unmask, de-interleave, RS-correct every block, parse the
/// byte-mode header.
pub fn decode_symbol(matrix: &ModuleMatrix, spec: &QrSpec) -> Result<DecodedMessage> {
    if matrix.n() != spec.side() {
        return Err(Error::Parameter(format!(
            "matrix side {} does not match version {} ({})",
            matrix.n(),
            spec.version,
            spec.side()
        )));
    }
    let (ec_level, mask) = read_format(matrix)?;
    let spec = QrSpec { ec_level, ..*spec };
    let stream = read_stream(matrix, &spec, mask);
    let mut data = Vec::with_capacity(spec.data_codewords());
    let mut corrections = Vec::new();
    for (i, (block, shape)) in deinterleave(&stream, &spec).iter().zip(spec.blocks()).enumerate() {
        let decoded = rs::rs_decode(block, shape.parity())
            .map_err(|_| Error::decode(DecodeStage::ReedSolomon, format!("block {i} uncorrectable")))?;
        corrections.push(decoded.corrections);
        data.extend(decoded.data);
    }
    let message = parse_byte_mode(&data, &spec)?;
    Ok(DecodedMessage { message, ec_level, mask, corrections })
}

/// Decode to the message bytes only.
pub fn decode_message(matrix: &ModuleMatrix, spec: &QrSpec) -> Result<Vec<u8>> {
    decode_symbol(matrix, spec).map(|d| d.message)
}

fn parse_byte_mode(data: &[u8], spec: &QrSpec) -> Result<Vec<u8>> {
    let bit = |i: usize| (data[i / 8] >> (7 - i % 8)) & 1;
    let read = |start: usize, len: usize| (start..start + len).fold(0usize, |acc, i| (acc << 1) | bit(i) as usize);
    let mode = read(0, 4);
    if mode != MODE_BYTE as usize {
        return Err(Error::decode(DecodeStage::Header, format!("unsupported mode indicator {mode:#06b}")));
    }
    let ccb = spec.char_count_bits();
    let len = read(4, ccb);
    let start = 4 + ccb;
    if start + 8 * len > data.len() * 8 {
        return Err(Error::decode(DecodeStage::Header, format!("length {len} overruns data")));
    }
    Ok((0..len).map(|i| read(start + 8 * i, 8) as u8).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::layout::function_pattern_map;

    #[test]
    fn empty_message_layout() {
        let spec = QrSpec::default();
        let data = data_codewords(b"", &spec).unwrap();
        assert_eq!(data.len(), 46);
        // 0100 00000000 0000 -> 0x40 0x00, then pads.
        assert_eq!(&data[..4], &[0x40, 0x00, 0xec, 0x11]);
        let m = build_matrix(b"", &spec).unwrap();
        assert_eq!(m.n(), 37);
        assert_eq!(decode_message(&m, &spec).unwrap(), b"");
    }

    #[test]
    fn hello_world_version1_m_matches_reference_codewords() {
        // Byte-mode "hello" in 1-M: 0100 00000101 then ASCII.
        let spec = QrSpec::new(1, EcLevel::M).unwrap();
        let data = data_codewords(b"hello", &spec).unwrap();
        assert_eq!(&data[..7], &[0x40, 0x56, 0x86, 0x56, 0xc6, 0xc6, 0xf0]);
        assert_eq!(data[7], 0xec);
    }

    #[test]
    fn capacity_error() {
        let spec = QrSpec::default();
        let msg = vec![b'x'; spec.byte_capacity() + 1];
        assert!(matches!(build_matrix(&msg, &spec), Err(Error::Capacity { len: 45, capacity: 44 })));
        assert!(build_matrix(&msg[1..], &spec).is_ok());
    }

    #[test]
    fn clean_roundtrip_all_masks() {
        for mask in 0..8 {
            let spec = QrSpec::default().with_mask(MaskChoice::Fixed(mask));
            let m = build_matrix(b"https://example.com/portrait", &spec).unwrap();
            let d = decode_symbol(&m, &spec).unwrap();
            assert_eq!(d.message, b"https://example.com/portrait");
            assert_eq!(d.mask, mask);
            assert!(d.corrections.iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn function_modules_hold_standard_pattern() {
        let spec = QrSpec::default();
        let m = build_matrix(b"abc", &spec).unwrap();
        let layout = Layout::new(5);
        for &i in &function_pattern_map(&spec) {
            if matches!(layout.roles[i], crate::qr::ModuleRole::Finder | crate::qr::ModuleRole::Alignment | crate::qr::ModuleRole::Timing) {
                assert_eq!(m.at(i), layout.base[i]);
            }
        }
        assert!(m.is_dark(0, 0) && !m.is_dark(1, 1) && m.is_dark(3, 3));
        assert!(m.is_dark(37 - 8, 8));
    }

    #[test]
    fn all_dark_matrix_fails_at_format() {
        let spec = QrSpec::default();
        let m = ModuleMatrix::new(37);
        match decode_message(&m, &spec) {
            Err(Error::Decode { stage: DecodeStage::FormatInfo, .. }) => {}
            other => panic!("expected format failure, got {other:?}"),
        }
    }

    #[test]
    fn mask_twice_restores_data_region() {
        let spec = QrSpec::default();
        let layout = Layout::new(5);
        let m = build_matrix(b"mask", &spec).unwrap();
        for p in 0..8 {
            let mut x = m.clone();
            x.apply_mask(&layout, p);
            x.apply_mask(&layout, p);
            assert_eq!(x, m);
        }
    }

    #[test]
    fn interleave_roundtrip() {
        let spec = QrSpec::default();
        let blocks = encode_blocks(&data_codewords(b"interleave", &spec).unwrap(), &spec).unwrap();
        assert_eq!(deinterleave(&interleave(&blocks, &spec), &spec), blocks);
    }

    #[test]
    fn first_pad_index() {
        let spec = QrSpec::default();
        // 12 header bits + 8*5 payload + 4 terminator = 56 bits = 7 bytes
        assert_eq!(first_pad_codeword(5, &spec), 7);
        let data = data_codewords(b"hello", &spec).unwrap();
        assert_eq!(data[7], 0xec);
        assert_eq!(first_pad_codeword(44, &spec), 46);
    }
}
