// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

/// Floats are pulled in bounded chunks so a forged header cannot force a
/// huge allocation before the payload runs out.
const F32_CHUNK: usize = 1 << 16;

pub(crate) struct LeReader<R> {
    inner: R,
}

impl<R: Read> LeReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner }
    }

    pub(crate) fn bytes<const N: usize>(&mut self, context: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| eof(e, context))?;
        Ok(buf)
    }

    pub(crate) fn u8(&mut self, context: &'static str) -> Result<u8> {
        Ok(self.bytes::<1>(context)?[0])
    }

    pub(crate) fn u16(&mut self, context: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(context)?))
    }

    pub(crate) fn u32(&mut self, context: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(context)?))
    }

    pub(crate) fn u64(&mut self, context: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(context)?))
    }

    pub(crate) fn f32(&mut self, context: &'static str) -> Result<f32> {
        let v = f32::from_le_bytes(self.bytes(context)?);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { context });
        }
        Ok(v)
    }

    pub(crate) fn f32s(&mut self, count: u64, context: &'static str) -> Result<Vec<f32>> {
        let mut out =
            Vec::with_capacity(usize::try_from(count).unwrap_or(usize::MAX).min(F32_CHUNK));
        let mut buf = vec![0u8; 4 * F32_CHUNK];
        let mut left = count;
        while left > 0 {
            let take = left.min(F32_CHUNK as u64) as usize;
            let chunk = &mut buf[..4 * take];
            self.inner.read_exact(chunk).map_err(|e| eof(e, context))?;
            for b in chunk.chunks_exact(4) {
                let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { context });
                }
                out.push(v);
            }
            left -= take as u64;
        }
        Ok(out)
    }

    pub(crate) fn raw(&mut self, len: usize, context: &'static str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| eof(e, context))?;
        Ok(buf)
    }

    /// Fails with `TrailingBytes` unless the stream is exhausted.
    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut rest = Vec::new();
        let n = (&mut self.inner).take(1 << 20).read_to_end(&mut rest)?;
        if n > 0 {
            let more = io::copy(&mut self.inner, &mut io::sink())?;
            return Err(Error::TrailingBytes {
                count: n as u64 + more,
            });
        }
        Ok(())
    }
}

fn eof(e: io::Error, context: &'static str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::TruncatedFile { context }
    } else {
        Error::Io(e)
    }
}

pub(crate) fn put_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 * values.len().min(F32_CHUNK));
    for chunk in values.chunks(F32_CHUNK) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub(crate) fn check_magic(found: [u8; 4], expected: [u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

pub(crate) fn check_version(version: u16, format: &'static str) -> Result<()> {
    if version != super::FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { format, version });
    }
    Ok(())
}

pub(crate) fn check_finite(values: &[f32], context: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteValue { context })
    }
}
