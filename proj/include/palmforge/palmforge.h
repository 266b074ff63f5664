#ifndef PALMFORGE_PALMFORGE_H
#define PALMFORGE_PALMFORGE_H

/* C interface to the palmprint generation pipeline. Every entry point
 * returns a pf_status; 0 is success and anything else is an error whose
 * human-readable message is retrievable per thread via pf_last_error().
 * Strings returned through char** out-params are owned by the caller and
 * released with pf_string_free(). */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pf_status {
    PF_OK = 0,
    PF_INVALID_ARGUMENT = 1,
    PF_SHAPE_MISMATCH = 2,
    PF_IO_ERROR = 3,
    PF_FORMAT_ERROR = 4,
    PF_TRUNCATED = 5,
    PF_NON_FINITE = 6,
    PF_INTEGRITY_ERROR = 7,
    PF_EMPTY_LIBRARY = 8,
    PF_INSUFFICIENT_SAMPLES = 9,
    PF_CONFIG_ERROR = 10,
    PF_PROTOCOL_ERROR = 11,
    PF_NOT_FOUND = 12,
    PF_INTERNAL_ERROR = 13
} pf_status;

/* Library version, "major.minor.patch". */
const char* pf_version(void);

/* Stable identifier for a status code ("ok", "config_error", ...). */
const char* pf_status_name(pf_status status);

/* Message from the most recent failing call on the calling thread; empty
 * string after a success. The pointer stays valid until this thread's next
 * palmforge call. */
const char* pf_last_error(void);

/* Opaque pipeline configuration handle. */
typedef struct pf_config pf_config;

/* Built-in defaults. */
pf_status pf_config_default(pf_config** out);
/* Load + validate a JSON config file. */
pf_status pf_config_load(const char* path, pf_config** out);
/* Parse + validate a JSON config document from memory. */
pf_status pf_config_parse(const char* json_text, pf_config** out);
/* Set one key by dotted path ("sampler.T"). Unknown keys, type mismatches,
 * and values that fail re-validation are rejected and leave the config
 * unchanged. String-typed keys take the value verbatim; other keys parse it
 * as JSON. */
pf_status pf_config_set(pf_config* config, const char* dotted_key, const char* value);
/* Dump the full effective config as pretty JSON. */
pf_status pf_config_dump(const pf_config* config, char** json_out);
void pf_config_free(pf_config* config);
void pf_string_free(char* text);

/* Commands. All write into the fixed tree under the config's output_dir
 * (corpus/, library/, samples/, metrics.json + effective_config.json) and
 * refuse to overwrite a non-empty slot unless force is nonzero. Each
 * summary_json_out (nullable) receives a one-object JSON run summary. */
pf_status pf_run_gen_corpus(const pf_config* config, int force, char** summary_json_out);
pf_status pf_run_build_library(const pf_config* config, int force,
                               char** summary_json_out);
pf_status pf_run_sample(const pf_config* config, int trace, int force,
                        char** summary_json_out);
/* Tree arguments may be NULL or empty to use {output_dir}/samples and
 * {output_dir}/corpus. */
pf_status pf_run_evaluate(const pf_config* config, const char* generated_tree,
                          const char* reference_tree, char** summary_json_out);
pf_status pf_run_demo(const pf_config* config, int trace, int force,
                      char** summary_json_out);

/* Re-read every artifact under an output root through its format parser and
 * re-check cross-file invariants. */
pf_status pf_validate_output_tree(const char* root);

#ifdef __cplusplus
}
#endif

#endif /* PALMFORGE_PALMFORGE_H */
