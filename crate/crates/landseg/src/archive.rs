//! Sample archives on disk, read as a stream.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use landseg_core::archive::{decode_record, encode_record, ArchiveHeader, SamplePair, HEADER_LEN};
use landseg_core::Error as CoreError;

use crate::error::{Error, Result};

/// Yields the records of an archive one at a time. After the declared number
/// of records it checks that nothing follows.
pub struct ArchiveReader<R> {
    inner: R,
    origin: PathBuf,
    header: ArchiveHeader,
    read: u32,
    finished: bool,
}

/// Fills `buf` as far as the stream allows and returns how much was read.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> ArchiveReader<R> {
    /// `origin` only labels error messages.
    pub fn new(mut inner: R, origin: impl Into<PathBuf>) -> Result<Self> {
        let origin = origin.into();
        let mut head = [0u8; HEADER_LEN];
        let got = read_full(&mut inner, &mut head).map_err(Error::io(&origin))?;
        if got < HEADER_LEN {
            return Err(Error::file(&origin)(CoreError::Corrupt(format!(
                "archive header needs {HEADER_LEN} bytes, file has {got}"
            ))));
        }
        let header = ArchiveHeader::decode(&head).map_err(Error::file(&origin))?;
        Ok(ArchiveReader {
            inner,
            origin,
            header,
            read: 0,
            finished: false,
        })
    }

    pub fn header(&self) -> ArchiveHeader {
        self.header
    }

    fn fail(&mut self, e: CoreError) -> Option<Result<SamplePair>> {
        self.finished = true;
        Some(Err(Error::file(&self.origin)(e)))
    }

    fn truncated(&mut self) -> Option<Result<SamplePair>> {
        let e = CoreError::Truncated {
            declared: self.header.count,
            read: self.read,
        };
        self.fail(e)
    }
}

impl<R: Read> Iterator for ArchiveReader<R> {
    type Item = Result<SamplePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if self.read == self.header.count {
            self.finished = true;
            let mut probe = [0u8; 1];
            return match read_full(&mut self.inner, &mut probe) {
                Ok(0) => None,
                Ok(_) => self.fail(CoreError::CountMismatch {
                    declared: self.header.count,
                }),
                Err(e) => Some(Err(Error::io(&self.origin)(e))),
            };
        }
        let mut len = [0u8; 4];
        match read_full(&mut self.inner, &mut len) {
            Ok(4) => {}
            Ok(_) => return self.truncated(),
            Err(e) => {
                self.finished = true;
                return Some(Err(Error::io(&self.origin)(e)));
            }
        }
        let len = u32::from_le_bytes(len) as u64;
        let mut body = Vec::new();
        match (&mut self.inner).take(len).read_to_end(&mut body) {
            Ok(n) if n as u64 == len => {}
            Ok(_) => return self.truncated(),
            Err(e) => {
                self.finished = true;
                return Some(Err(Error::io(&self.origin)(e)));
            }
        }
        match decode_record(&body) {
            Ok(pair) => {
                self.read += 1;
                Some(Ok(pair))
            }
            Err(e) => self.fail(e),
        }
    }
}

pub fn open_archive(path: impl AsRef<Path>) -> Result<ArchiveReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(Error::io(path))?;
    ArchiveReader::new(BufReader::new(file), path)
}

/// Loads every record, failing on the first bad one.
pub fn read_archive(path: impl AsRef<Path>) -> Result<(ArchiveHeader, Vec<SamplePair>)> {
    let reader = open_archive(path)?;
    let header = reader.header();
    let pairs = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, pairs))
}

/// Writes records as they arrive. The header's count is patched in by
/// [`ArchiveWriter::finish`], which then renames the temporary file over the
/// destination; dropping the writer unfinished leaves the destination as it
/// was.
pub struct ArchiveWriter {
    out: BufWriter<tempfile::NamedTempFile>,
    path: PathBuf,
    tile_size: usize,
    count: usize,
}

impl ArchiveWriter {
    pub fn create(path: impl AsRef<Path>, tile_size: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(Error::io(&dir))?;
        let mut out = BufWriter::new(tmp);
        out.write_all(&ArchiveHeader::new(0, tile_size)?.encode())
            .map_err(Error::io(&path))?;
        Ok(ArchiveWriter {
            out,
            path,
            tile_size,
            count: 0,
        })
    }

    pub fn push(&mut self, pair: &SamplePair) -> Result<()> {
        self.out.write_all(&encode_record(pair)?).map_err(Error::io(&self.path))?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<()> {
        let path = self.path;
        let header = ArchiveHeader::new(self.count, self.tile_size)?.encode();
        let mut tmp = self.out.into_inner().map_err(|e| Error::io(&path)(e.into_error()))?;
        tmp.seek(SeekFrom::Start(0)).map_err(Error::io(&path))?;
        tmp.write_all(&header).map_err(Error::io(&path))?;
        tmp.as_file().sync_all().map_err(Error::io(&path))?;
        tmp.persist(&path).map_err(|e| Error::io(&path)(e.error))?;
        Ok(())
    }
}

pub fn write_archive(path: impl AsRef<Path>, pairs: &[SamplePair], tile_size: usize) -> Result<()> {
    let mut w = ArchiveWriter::create(path, tile_size)?;
    for p in pairs {
        w.push(p)?;
    }
    w.finish()
}
