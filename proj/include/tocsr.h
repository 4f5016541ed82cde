/* C API for the tocsr shared library: opaque session handle, error codes,
 * and the pipeline commands. All functions return TOCSR_OK (0) on success;
 * on failure call tocsr_last_error() for a message. */
#ifndef TOCSR_H
#define TOCSR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct tocsr_session tocsr_session;

typedef enum {
    TOCSR_OK = 0,
    TOCSR_E_INVALID_ARG = 1,
    TOCSR_E_SHAPE = 2,
    TOCSR_E_NUMERIC = 3,
    TOCSR_E_IO = 4,
    TOCSR_E_MISSING_DEPENDENCY = 5,
    TOCSR_E_STATE = 6,
    TOCSR_E_UNKNOWN = 7
} tocsr_status;

const char* tocsr_version(void);

/* Opens a session with default configuration; config_path may be NULL. */
tocsr_status tocsr_open(const char* config_path, tocsr_session** out);
void tocsr_close(tocsr_session* s);

/* Overrides one "section.key" configuration value. */
tocsr_status tocsr_set(tocsr_session* s, const char* key, const char* value);

/* Runs one pipeline command: gen-data, train-vae, distill-vae,
 * train-teacher, capture, calibrate, search, finetune, train-sr,
 * distill-sr, report, selftest. `arg` carries the command's optional
 * argument (channels for train-vae, comma-separated eps grid for search)
 * and may be NULL. */
tocsr_status tocsr_run(tocsr_session* s, const char* command, const char* arg);

/* 2x super-resolution of a P6 PPM file through the distilled one-step
 * generator. */
tocsr_status tocsr_infer(tocsr_session* s, const char* in_ppm, const char* out_ppm);

/* Plain-text summary of the run directory's results; caller frees with
 * tocsr_free_text. */
tocsr_status tocsr_report(tocsr_session* s, char** out_text);
void tocsr_free_text(char* text);

/* Message for the most recent failure on this session (thread-local for
 * NULL sessions). */
const char* tocsr_last_error(tocsr_session* s);

#ifdef __cplusplus
}
#endif

#endif /* TOCSR_H */
