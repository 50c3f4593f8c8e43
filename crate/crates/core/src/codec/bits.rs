//! LSB-first bit stream over 64-bit words, serialized little-endian.

pub(crate) struct BitWriter {
    words: Vec<u64>,
    pos: usize,
}

impl BitWriter {
    pub fn with_capacity(bits: usize) -> Self {
        Self { words: Vec::with_capacity(bits.div_ceil(64)), pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    #[inline]
    pub fn write_bit(&mut self, bit: bool) -> bool {
        self.write_bits(bit as u64, 1);
        bit
    }

    /// Writes the low `n` bits of `value` (`n <= 64`).
    #[inline]
    pub fn write_bits(&mut self, value: u64, n: usize) {
        if n == 0 {
            return;
        }
        let value = if n == 64 { value } else { value & ((1u64 << n) - 1) };
        let off = self.pos % 64;
        if off == 0 {
            self.words.push(0);
        }
        let last = self.words.len() - 1;
        self.words[last] |= value << off;
        if off + n > 64 {
            self.words.push(value >> (64 - off));
        }
        self.pos += n;
    }

    /// Zero-fills up to bit position `pos`.
    pub fn pad_to(&mut self, pos: usize) {
        debug_assert!(pos >= self.pos);
        while self.pos < pos {
            let n = (pos - self.pos).min(64);
            self.write_bits(0, n);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let nbytes = self.pos.div_ceil(8);
        let mut out = Vec::with_capacity(self.words.len() * 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(nbytes);
        out
    }
}

pub(crate) struct BitReader {
    words: Vec<u64>,
    pos: usize,
}

impl BitReader {
    pub fn new(bytes: &[u8]) -> Self {
        let mut words = Vec::with_capacity(bytes.len().div_ceil(8) + 1);
        let mut chunks = bytes.chunks_exact(8);
        for c in &mut chunks {
            words.push(u64::from_le_bytes(c.try_into().unwrap()));
        }
        let rest = chunks.remainder();
        if !rest.is_empty() {
            let mut buf = [0u8; 8];
            buf[..rest.len()].copy_from_slice(rest);
            words.push(u64::from_le_bytes(buf));
        }
        // guard word so a straddling read never indexes past the end
        words.push(0);
        Self { words, pos: 0 }
    }

    pub fn seek(&mut self, pos: usize) {
        self.pos = pos;
    }

    #[inline]
    pub fn read_bit(&mut self) -> bool {
        self.read_bits(1) != 0
    }

    #[inline]
    pub fn read_bits(&mut self, n: usize) -> u64 {
        if n == 0 {
            return 0;
        }
        let w = self.pos / 64;
        let off = self.pos % 64;
        let mut v = self.words[w] >> off;
        if off + n > 64 {
            v |= self.words[w + 1] << (64 - off);
        }
        self.pos += n;
        if n == 64 {
            v
        } else {
            v & ((1u64 << n) - 1)
        }
    }
}
