//! Single-file NIfTI-1 volumes.

use super::DataError;
use crate::volume::Volume;

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// Supported voxel encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    U16,
    F32,
}

impl Datatype {
    fn from_code(code: i16) -> Result<Self, DataError> {
        match code {
            2 => Ok(Self::U8),
            4 => Ok(Self::I16),
            512 => Ok(Self::U16),
            16 => Ok(Self::F32),
            other => Err(DataError::UnsupportedDatatype(other)),
        }
    }

    fn code(self) -> i16 {
        match self {
            Self::U8 => 2,
            Self::I16 => 4,
            Self::U16 => 512,
            Self::F32 => 16,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::F32 => 4,
        }
    }
}

/// Voxels (scaled to physical intensity) and `(slice, row, col)` spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiVolume {
    pub volume: Volume<f32>,
    pub spacing: [f64; 3],
    pub datatype: Datatype,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn raw<const N: usize>(&self, at: usize) -> [u8; N] {
        self.bytes[at..at + N].try_into().expect("in bounds")
    }

    fn i16(&self, at: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.raw(at)),
            Endian::Big => i16::from_be_bytes(self.raw(at)),
        }
    }

    fn u16(&self, at: usize) -> u16 {
        self.i16(at) as u16
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.raw(at)),
            Endian::Big => f32::from_be_bytes(self.raw(at)),
        }
    }
}

/// Parses a NIfTI-1 header plus payload. Byte order is detected from the
/// `sizeof_hdr` field, which must read 348.
pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiVolume, DataError> {
    if bytes.len() < HEADER_SIZE {
        return Err(DataError::TruncatedPayload { needed: HEADER_SIZE, available: bytes.len() });
    }
    let sentinel: [u8; 4] = bytes[0..4].try_into().expect("in bounds");
    let endian = if i32::from_le_bytes(sentinel) == HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(sentinel) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(DataError::BadMagic(format!("sizeof_hdr is neither 348 little- nor big-endian ({sentinel:02x?})")));
    };
    let magic = &bytes[344..348];
    if magic != b"n+1\0" && magic != b"ni1\0" {
        return Err(DataError::BadMagic(format!("magic {magic:02x?}")));
    }
    let r = Reader { bytes, endian };

    let ndim = r.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(DataError::InvalidHeader(format!("dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for i in 1..=ndim as usize {
        let d = r.i16(40 + 2 * i);
        if d < 1 {
            return Err(DataError::InvalidHeader(format!("dim[{i}] = {d}")));
        }
        if i <= 3 {
            dims[i - 1] = d as usize;
        } else if d != 1 {
            return Err(DataError::InvalidHeader(format!("only 3-D volumes are supported; dim[{i}] = {d}")));
        }
    }
    let [nx, ny, nz] = dims;
    let datatype = Datatype::from_code(r.i16(70))?;

    let mut spacing = [1.0f64; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let axis = 3 - i;
        if axis <= ndim as usize {
            let p = r.f32(76 + 4 * axis);
            if !(p.is_finite() && p > 0.0) {
                return Err(DataError::InvalidHeader(format!("pixdim[{axis}] = {p}")));
            }
            *s = f64::from(p);
        }
    }

    let vox_offset = r.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= 0.0) {
        return Err(DataError::InvalidHeader(format!("vox_offset = {vox_offset}")));
    }
    let offset = (vox_offset as usize).max(HEADER_SIZE);
    let count = nx.checked_mul(ny).and_then(|v| v.checked_mul(nz));
    let needed = count.and_then(|c| c.checked_mul(datatype.size())).and_then(|b| b.checked_add(offset));
    let (count, needed) = match (count, needed) {
        (Some(c), Some(n)) => (c, n),
        _ => return Err(DataError::InvalidHeader("volume size overflows".into())),
    };
    if bytes.len() < needed {
        return Err(DataError::TruncatedPayload { needed, available: bytes.len() });
    }

    let slope = r.f32(112);
    let inter = r.f32(116);
    let scale = slope != 0.0 && slope.is_finite() && inter.is_finite();
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let at = offset + i * datatype.size();
        let v = match datatype {
            Datatype::U8 => f32::from(bytes[at]),
            Datatype::I16 => f32::from(r.i16(at)),
            Datatype::U16 => f32::from(r.u16(at)),
            Datatype::F32 => r.f32(at),
        };
        data.push(if scale { v * slope + inter } else { v });
    }
    let volume = Volume::new([nz, ny, nx], data).expect("count matches dims");
    Ok(NiftiVolume { volume, spacing, datatype })
}

/// Encodes a volume as a single-file NIfTI-1 image. Values are rounded and
/// saturated for integer datatypes.
pub fn write_nifti(volume: &Volume<f32>, spacing: [f64; 3], datatype: Datatype, endian: Endian) -> Vec<u8> {
    let [nz, ny, nx] = volume.dims();
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET];
    let put = |out: &mut Vec<u8>, at: usize, bytes: &[u8]| out[at..at + bytes.len()].copy_from_slice(bytes);
    macro_rules! enc {
        ($v:expr) => {
            match endian {
                Endian::Little => $v.to_le_bytes(),
                Endian::Big => $v.to_be_bytes(),
            }
        };
    }
    put(&mut out, 0, &enc!(HEADER_SIZE as i32));
    for (i, d) in [3, nx, ny, nz, 1, 1, 1, 1].into_iter().enumerate() {
        put(&mut out, 40 + 2 * i, &enc!(d as i16));
    }
    put(&mut out, 70, &enc!(datatype.code()));
    put(&mut out, 72, &enc!((datatype.size() * 8) as i16));
    let pixdim = [1.0, spacing[2], spacing[1], spacing[0], 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.into_iter().enumerate() {
        put(&mut out, 76 + 4 * i, &enc!(p as f32));
    }
    put(&mut out, 108, &enc!(DEFAULT_VOX_OFFSET as f32));
    put(&mut out, 112, &enc!(1.0f32));
    put(&mut out, 116, &enc!(0.0f32));
    put(&mut out, 344, b"n+1\0");
    out.reserve(volume.data().len() * datatype.size());
    for &v in volume.data() {
        match datatype {
            Datatype::U8 => out.push(v.round().clamp(0.0, 255.0) as u8),
            Datatype::I16 => out.extend_from_slice(&enc!(v.round().clamp(-32768.0, 32767.0) as i16)),
            Datatype::U16 => out.extend_from_slice(&enc!(v.round().clamp(0.0, 65535.0) as u16)),
            Datatype::F32 => out.extend_from_slice(&enc!(v)),
        }
    }
    out
}
