use super::VendorError;

/// `ceil(image_size / chunk_size)`.
pub fn chunk_count(image_size: u64, chunk_size: u32) -> Result<u32, VendorError> {
    if chunk_size == 0 {
        return Err(VendorError::InvalidChunkSize);
    }
    u32::try_from(image_size.div_ceil(chunk_size as u64))
        .map_err(|_| VendorError::ImageTooLarge(image_size as usize))
}

/// Split an image into fixed-length payloads; only the last may be shorter.
pub fn chunk_image(bytes: &[u8], chunk_size: u32) -> Result<Vec<Vec<u8>>, VendorError> {
    if chunk_size == 0 {
        return Err(VendorError::InvalidChunkSize);
    }
    if bytes.is_empty() {
        return Err(VendorError::EmptyImage);
    }
    chunk_count(bytes.len() as u64, chunk_size)?;
    Ok(bytes
        .chunks(chunk_size as usize)
        .map(<[u8]>::to_vec)
        .collect())
}

pub fn join_chunks<P: AsRef<[u8]>>(chunks: &[P]) -> Vec<u8> {
    chunks
        .iter()
        .flat_map(|c| c.as_ref().iter().copied())
        .collect()
}
