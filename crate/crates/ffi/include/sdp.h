#ifndef SDP_H
#define SDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SdpStatus {
  SDP_STATUS_OK = 0,
  // A required pointer argument was NULL.
  SDP_STATUS_NULL_ARGUMENT = 1,
  SDP_STATUS_INVALID_UTF8 = 2,
  // Document or proposition syntax error.
  SDP_STATUS_PARSE = 3,
  // Unknown session, decision or theory.
  SDP_STATUS_NOT_FOUND = 4,
  // Well-formed input the engine cannot accept.
  SDP_STATUS_INVALID = 5,
  // Commit refused: not confirmed, tied, no candidates or not open.
  SDP_STATUS_REFUSED = 6,
  SDP_STATUS_ENGINE = 7,
  // A Rust panic was caught at the boundary.
  SDP_STATUS_PANIC = 8,
} SdpStatus;

// A parsed document: knowledge base, decision classes and scenario.
typedef struct SdpDocument SdpDocument;

// One consultation over a document, with its own findings.
typedef struct SdpSession SdpSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, static storage.
const char *sdp_version(void);

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into the library on the same thread.
const char *sdp_last_error(void);

// Parses a document. On success `*out` owns a new handle.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum SdpStatus sdp_document_parse(const char *text_ptr, struct SdpDocument **out);

// # Safety
// `doc` must come from [`sdp_document_parse`] and not be used afterwards.
// NULL is ignored.
void sdp_document_free(struct SdpDocument *doc);

// Arguments and status for a goal as JSON. `theories` is a comma-separated
// list of theory ids, or NULL for every theory.
//
// # Safety
// Pointers must be valid; `theories` may be NULL.
enum SdpStatus sdp_argue_json(const struct SdpDocument *doc,
                              const char *goal,
                              const char *theories,
                              char **out);

// Starts a session over a copy of the document.
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_session_new(const struct SdpDocument *doc,
                               const char *id,
                               struct SdpSession **out);

// Reports a ground finding as present or, for askable propositions, absent.
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_session_add_finding(struct SdpSession *session,
                                       const char *proposition,
                                       bool present);

// The session summary as JSON.
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_session_view_json(const struct SdpSession *session, char **out);

// Candidates, ranking and tie flag of one decision as JSON.
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_session_options_json(const struct SdpSession *session,
                                        const char *decision,
                                        char **out);

// The next question for a decision. `*out` is NULL when there is none.
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_session_next_question(const struct SdpSession *session,
                                         const char *decision,
                                         char **out);

// Commits a decision. On success `*out` holds the chosen option; a refusal
// returns [`SdpStatus::Refused`] with the reason in [`sdp_last_error`].
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_session_commit(struct SdpSession *session, const char *decision, char **out);

// # Safety
// `session` must come from [`sdp_session_new`] and not be used afterwards.
// NULL is ignored.
void sdp_session_free(struct SdpSession *session);

// Runs the document's scenario and returns the trace as JSON lines.
//
// # Safety
// Pointers must be valid.
enum SdpStatus sdp_run_episode_json(const struct SdpDocument *doc, uint64_t max_steps, char **out);

// # Safety
// `s` must come from this library and not be used afterwards. NULL is
// ignored.
void sdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDP_H */
