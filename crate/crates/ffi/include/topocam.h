#ifndef TOPOCAM_H
#define TOPOCAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TopocamStatus {
  TOPOCAM_STATUS_OK = 0,
  TOPOCAM_STATUS_NULL_ARGUMENT = 1,
  TOPOCAM_STATUS_INVALID_UTF8 = 2,
  TOPOCAM_STATUS_INVALID_MESH = 3,
  TOPOCAM_STATUS_INVALID_SETUP = 4,
  TOPOCAM_STATUS_INVALID_JSON = 5,
  TOPOCAM_STATUS_INVALID_DECISION = 6,
  TOPOCAM_STATUS_UNKNOWN_QUERY = 7,
  TOPOCAM_STATUS_NOT_FINALIZED = 8,
  TOPOCAM_STATUS_IDENTIFICATION_FAILED = 9,
  TOPOCAM_STATUS_NOT_FOUND = 10,
  TOPOCAM_STATUS_IO = 11,
  TOPOCAM_STATUS_PANIC = 12,
} TopocamStatus;

/**
 * Opaque identification session.
 */
typedef struct TopocamSession TopocamSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread.
 */
const char *topocam_last_error(void);

/**
 * Library version, a static string.
 */
const char *topocam_version(void);

/**
 * Opens a session from STL bytes (binary or ASCII) with the default setup:
 * tool axis +Z, bottoms up to 30 degrees, flanks from 60 degrees.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `id` must be a NUL-terminated
 * string; `out` must be writable.
 */
enum TopocamStatus topocam_session_from_stl(const char *id,
                                            const uint8_t *bytes,
                                            size_t len,
                                            struct TopocamSession **out);

/**
 * Like [`topocam_session_from_stl`] with an explicit tool axis and angle
 * thresholds in degrees.
 *
 * # Safety
 * Same as [`topocam_session_from_stl`].
 */
enum TopocamStatus topocam_session_from_stl_with_setup(const char *id,
                                                       const uint8_t *bytes,
                                                       size_t len,
                                                       double axis_x,
                                                       double axis_y,
                                                       double axis_z,
                                                       double theta_bottom,
                                                       double theta_flank,
                                                       struct TopocamSession **out);

/**
 * Runs identification until the next query or the end. `pending` receives
 * the number of open queries, 0 once the graph is final.
 *
 * # Safety
 * `session` must come from this library; `pending` may be NULL.
 */
enum TopocamStatus topocam_session_advance(struct TopocamSession *session, size_t *pending);

/**
 * Applies a decomposition decision or a relation override given as JSON.
 * A rejected decision leaves the session unchanged.
 *
 * # Safety
 * `session` must come from this library; `json` must be NUL-terminated.
 */
enum TopocamStatus topocam_session_decide(struct TopocamSession *session, const char *json);

/**
 * Session summary: phase, feature counts, macros, pending queries.
 *
 * # Safety
 * `session` must come from this library; `out` must be writable.
 */
enum TopocamStatus topocam_session_state_json(const struct TopocamSession *session, char **out);

/**
 * Full working graph: features, arcs, hidden arcs, macros, relations, queries.
 *
 * # Safety
 * `session` must come from this library; `out` must be writable.
 */
enum TopocamStatus topocam_session_graph_json(const struct TopocamSession *session, char **out);

/**
 * Final macro graph, byte for byte as the CLI writes it. Fails with
 * `NotFinalized` while identification is open.
 *
 * # Safety
 * `session` must come from this library; `out` must be writable.
 */
enum TopocamStatus topocam_session_final_graph_json(const struct TopocamSession *session,
                                                    char **out);

/**
 * Indexed mesh with per-face feature and macro labels and colors.
 *
 * # Safety
 * `session` must come from this library; `out` must be writable.
 */
enum TopocamStatus topocam_session_mesh_json(const struct TopocamSession *session, char **out);

/**
 * Writes the session to `<dir>/<id>.json`.
 *
 * # Safety
 * `session` must come from this library; `dir` must be NUL-terminated.
 */
enum TopocamStatus topocam_session_save(const struct TopocamSession *session, const char *dir);

/**
 * Reopens a session saved by [`topocam_session_save`], the CLI or the
 * HTTP server.
 *
 * # Safety
 * `dir` and `id` must be NUL-terminated; `out` must be writable.
 */
enum TopocamStatus topocam_session_load(const char *dir,
                                        const char *id,
                                        struct TopocamSession **out);

/**
 * # Safety
 * `session` must come from this library and not be used afterwards. NULL is
 * ignored.
 */
void topocam_session_free(struct TopocamSession *session);

/**
 * # Safety
 * `s` must be a string returned by this library and not be used
 * afterwards. NULL is ignored.
 */
void topocam_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOCAM_H */
