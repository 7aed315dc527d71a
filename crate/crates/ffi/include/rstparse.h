#ifndef RSTPARSE_H
#define RSTPARSE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum RstStatus {
  RST_STATUS_OK = 0,
  RST_STATUS_NULL_POINTER = 1,
  RST_STATUS_INVALID_UTF8 = 2,
  RST_STATUS_INVALID_INPUT = 3,
  RST_STATUS_IO = 4,
  RST_STATUS_CHECKPOINT = 5,
  RST_STATUS_MODEL = 6,
  RST_STATUS_EVALUATION = 7,
  RST_STATUS_PANIC = 8,
} RstStatus;

/**
 * Opaque parser handle.
 */
typedef struct RstParser RstParser;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file. On success `*out` receives a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum RstStatus rstparse_parser_load(const char *path, struct RstParser **out);

/**
 * Parses one corpus record (a JSON object with `doc_id`, `lang`, `edus`).
 * `*out` receives the record serialized with its predicted tree.
 *
 * # Safety
 * `parser` must come from [`rstparse_parser_load`]; `record_json` must be a
 * NUL-terminated string; `out` must be valid for writes.
 */
enum RstStatus rstparse_parser_parse(const struct RstParser *parser,
                                     const char *record_json,
                                     char **out);

/**
 * Releases a parser handle. Null is ignored.
 *
 * # Safety
 * `parser` must be null or a handle not yet freed.
 */
void rstparse_parser_free(struct RstParser *parser);

/**
 * Scores predicted trees against gold trees. Both inputs are JSONL corpora
 * matched by `doc_id`. `macro_by_class` selects class-averaged macro F1
 * instead of document-averaged. `*out` receives the report as JSON.
 *
 * # Safety
 * `gold_jsonl` and `pred_jsonl` must be NUL-terminated strings; `out` must be
 * valid for writes.
 */
enum RstStatus rstparse_evaluate(const char *gold_jsonl,
                                 const char *pred_jsonl,
                                 bool include_root,
                                 bool macro_by_class,
                                 char **out);

/**
 * Converts the tree of an annotated record into its top-down split
 * sequence, one `i j k LABEL` line per step.
 *
 * # Safety
 * `record_json` must be a NUL-terminated string; `out` must be valid for
 * writes.
 */
enum RstStatus rstparse_tree_to_trace(const char *record_json, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned through an `out` parameter here.
 */
void rstparse_string_free(char *s);

/**
 * Message of the most recent failure on this thread, or null. Valid until
 * the next call into the library on the same thread.
 */
const char *rstparse_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rstparse_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSTPARSE_H */
