//! C ABI over the trained-model surface: load a checkpoint, tag token
//! sequences, inspect errors. Handles are opaque; every returned allocation
//! has a matching free function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use xlner::corpus::{Sentence, Token};
use xlner::model::{load_checkpoint, ModelError, ModelParams};

/// Opaque handle to a loaded model.
pub struct XlnerModel {
    inner: ModelParams,
}

/// Status codes returned by fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XlnerStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8, or an argument outside the model's domain.
    InvalidArgument = 1,
    /// The checkpoint could not be read.
    Io = 2,
    /// The checkpoint exists but is not a valid model file.
    BadCheckpoint = 3,
    /// Any other failure; details via xlner_last_error.
    Internal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message for the most recent error on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xlner_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(ptr::null())
    })
}

unsafe fn cstr_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, XlnerStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(XlnerStatus::InvalidArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        XlnerStatus::InvalidArgument
    })
}

/// Load a model checkpoint. Returns null on failure (see xlner_last_error);
/// a non-null handle must be released with xlner_model_free.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn xlner_model_load(path: *const c_char) -> *mut XlnerModel {
    clear_error();
    let path = match cstr_arg(path, "path") {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    match load_checkpoint(Path::new(path)) {
        Ok(inner) => Box::into_raw(Box::new(XlnerModel { inner })),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer returned by xlner_model_load that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn xlner_model_free(model: *mut XlnerModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of languages the model was trained on.
///
/// # Safety
/// `model` must be a live handle from xlner_model_load.
#[no_mangle]
pub unsafe extern "C" fn xlner_model_language_count(model: *const XlnerModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.languages.len()
}

/// Name of language `index` as a fresh C string (free with
/// xlner_string_free), or null if out of range.
///
/// # Safety
/// `model` must be a live handle from xlner_model_load.
#[no_mangle]
pub unsafe extern "C" fn xlner_model_language(
    model: *const XlnerModel,
    index: usize,
) -> *mut c_char {
    if model.is_null() {
        return ptr::null_mut();
    }
    let model = &*model;
    match model.inner.languages.get(index) {
        Some(lang) => CString::new(lang.as_str())
            .map(CString::into_raw)
            .unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    }
}

/// Tag one sentence. `tokens` is an array of `token_count` NUL-terminated
/// UTF-8 token strings; on success `*out_tags` receives an array of
/// `token_count` newly allocated tag strings, to be released with
/// xlner_tags_free.
///
/// # Safety
/// `model` must be a live handle; `tokens` must point to `token_count`
/// valid C strings; `out_tags` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn xlner_model_tag(
    model: *const XlnerModel,
    language: *const c_char,
    tokens: *const *const c_char,
    token_count: usize,
    out_tags: *mut *mut *mut c_char,
) -> XlnerStatus {
    clear_error();
    if model.is_null() || out_tags.is_null() || (tokens.is_null() && token_count > 0) {
        set_error("null pointer argument");
        return XlnerStatus::InvalidArgument;
    }
    if token_count == 0 {
        set_error("token_count is zero");
        return XlnerStatus::InvalidArgument;
    }
    let language = match cstr_arg(language, "language") {
        Ok(l) => l,
        Err(s) => return s,
    };
    let mut sentence_tokens = Vec::with_capacity(token_count);
    for i in 0..token_count {
        let word = match cstr_arg(*tokens.add(i), "token") {
            Ok(w) => w,
            Err(s) => return s,
        };
        if word.is_empty() {
            set_error(format!("token {i} is empty"));
            return XlnerStatus::InvalidArgument;
        }
        sentence_tokens.push(Token::new(word, "O"));
    }
    let sentence = Sentence::new(sentence_tokens);
    match (*model).inner.predict(language, &sentence) {
        Ok(tags) => {
            let mut raw: Vec<*mut c_char> = tags
                .into_iter()
                .map(|t| CString::new(t).unwrap().into_raw())
                .collect();
            raw.shrink_to_fit();
            let ptr = raw.as_mut_ptr();
            std::mem::forget(raw);
            *out_tags = ptr;
            XlnerStatus::Ok
        }
        Err(e @ ModelError::UnknownLanguage(_)) => {
            set_error(e.to_string());
            XlnerStatus::InvalidArgument
        }
        Err(e) => {
            set_error(e.to_string());
            XlnerStatus::Internal
        }
    }
}

/// Release a tag array returned by xlner_model_tag.
///
/// # Safety
/// `tags` must be null or a pointer from xlner_model_tag with the matching
/// `token_count`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn xlner_tags_free(tags: *mut *mut c_char, token_count: usize) {
    if tags.is_null() {
        return;
    }
    let vec = Vec::from_raw_parts(tags, token_count, token_count);
    for p in vec {
        if !p.is_null() {
            drop(CString::from_raw(p));
        }
    }
}

/// Release a string returned by xlner_model_language.
///
/// # Safety
/// `s` must be null or a pointer from xlner_model_language, freed at most
/// once.
#[no_mangle]
pub unsafe extern "C" fn xlner_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    use xlner::corpus::{ColumnLayout, Corpus, TagScheme};
    use xlner::model::{build_model, save_checkpoint, EmbeddingSource, SharingConfig};

    fn checkpoint() -> (tempfile::TempDir, CString) {
        let corpus = Corpus {
            language: "en".into(),
            scheme: TagScheme::Iobes,
            layout: ColumnLayout::simple(),
            sentences: vec![Sentence::new(vec![
                Token::new("Anna", "S-PER"),
                Token::new("runs", "O"),
            ])],
            repair_warnings: 0,
        };
        let model = build_model(
            (3, 2, 2),
            &[&corpus],
            &EmbeddingSource::Shared("runs 0.1 0.2\nanna 0.3 0.4\n".into()),
            SharingConfig::all(),
            1,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let c = CString::new(path.to_str().unwrap()).unwrap();
        (dir, c)
    }

    #[test]
    fn load_tag_free_round_trip() {
        let (_dir, path) = checkpoint();
        unsafe {
            let model = xlner_model_load(path.as_ptr());
            assert!(!model.is_null());
            assert_eq!(xlner_model_language_count(model), 1);
            let lang = xlner_model_language(model, 0);
            assert_eq!(CStr::from_ptr(lang).to_str().unwrap(), "en");

            let words = [CString::new("Anna").unwrap(), CString::new("runs").unwrap()];
            let ptrs: Vec<*const c_char> = words.iter().map(|w| w.as_ptr()).collect();
            let mut tags: *mut *mut c_char = ptr::null_mut();
            let status = xlner_model_tag(model, lang, ptrs.as_ptr(), ptrs.len(), &mut tags);
            assert_eq!(status, XlnerStatus::Ok);
            for i in 0..2 {
                let tag = CStr::from_ptr(*tags.add(i)).to_str().unwrap();
                assert!(!tag.is_empty());
            }
            xlner_tags_free(tags, 2);
            xlner_string_free(lang);
            xlner_model_free(model);
        }
    }

    #[test]
    fn bad_path_sets_error() {
        let path = CString::new("/nonexistent/model.ckpt").unwrap();
        unsafe {
            let model = xlner_model_load(path.as_ptr());
            assert!(model.is_null());
            let err = xlner_last_error();
            assert!(!err.is_null());
        }
    }

    #[test]
    fn unknown_language_is_invalid_argument() {
        let (_dir, path) = checkpoint();
        unsafe {
            let model = xlner_model_load(path.as_ptr());
            let lang = CString::new("zz").unwrap();
            let word = CString::new("Anna").unwrap();
            let ptrs = [word.as_ptr()];
            let mut tags: *mut *mut c_char = ptr::null_mut();
            let status = xlner_model_tag(model, lang.as_ptr(), ptrs.as_ptr(), 1, &mut tags);
            assert_eq!(status, XlnerStatus::InvalidArgument);
            xlner_model_free(model);
        }
    }
}
