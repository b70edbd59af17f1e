#ifndef XLNER_H
#define XLNER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible entry points.
 */
typedef enum {
  XLNER_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8, or an argument outside the model's domain.
   */
  XLNER_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The checkpoint could not be read.
   */
  XLNER_STATUS_IO = 2,
  /**
   * The checkpoint exists but is not a valid model file.
   */
  XLNER_STATUS_BAD_CHECKPOINT = 3,
  /**
   * Any other failure; details via xlner_last_error.
   */
  XLNER_STATUS_INTERNAL = 4,
} XlnerStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct XlnerModel XlnerModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *xlner_last_error(void);

/**
 * Load a model checkpoint. Returns null on failure (see xlner_last_error);
 * a non-null handle must be released with xlner_model_free.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
XlnerModel *xlner_model_load(const char *path);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer returned by xlner_model_load that has
 * not been freed yet.
 */
void xlner_model_free(XlnerModel *model);

/**
 * Number of languages the model was trained on.
 *
 * # Safety
 * `model` must be a live handle from xlner_model_load.
 */
uintptr_t xlner_model_language_count(const XlnerModel *model);

/**
 * Name of language `index` as a fresh C string (free with
 * xlner_string_free), or null if out of range.
 *
 * # Safety
 * `model` must be a live handle from xlner_model_load.
 */
char *xlner_model_language(const XlnerModel *model, uintptr_t index);

/**
 * Tag one sentence. `tokens` is an array of `token_count` NUL-terminated
 * UTF-8 token strings; on success `*out_tags` receives an array of
 * `token_count` newly allocated tag strings, to be released with
 * xlner_tags_free.
 *
 * # Safety
 * `model` must be a live handle; `tokens` must point to `token_count`
 * valid C strings; `out_tags` must be a valid writable pointer.
 */
XlnerStatus xlner_model_tag(const XlnerModel *model,
                            const char *language,
                            const char *const *tokens,
                            uintptr_t token_count,
                            char ***out_tags);

/**
 * Release a tag array returned by xlner_model_tag.
 *
 * # Safety
 * `tags` must be null or a pointer from xlner_model_tag with the matching
 * `token_count`, freed at most once.
 */
void xlner_tags_free(char **tags, uintptr_t token_count);

/**
 * Release a string returned by xlner_model_language.
 *
 * # Safety
 * `s` must be null or a pointer from xlner_model_language, freed at most
 * once.
 */
void xlner_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XLNER_H */
