#ifndef SKETCH3D_SKETCH3D_H
#define SKETCH3D_SKETCH3D_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define S3D_API __declspec(dllexport)
#else
#define S3D_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum s3d_status {
  S3D_OK = 0,
  S3D_INVALID_ARGUMENT = 1, /* bad option, shape, value or state */
  S3D_IO_ERROR = 2,         /* missing or unwritable file, socket bind */
  S3D_FORMAT_ERROR = 3,     /* malformed PNG, OBJ, JSON or checkpoint */
  S3D_TRAINING_DIVERGED = 4,
  S3D_INTERNAL_ERROR = 5
} s3d_status;

/* Library version string, e.g. "1.0.0". */
S3D_API const char* s3d_version(void);
S3D_API const char* s3d_status_name(s3d_status status);

/* Message of the last failed call on this thread; "" when none. Valid until
 * the next call into the library on the same thread. */
S3D_API const char* s3d_last_error(void);

/* Frees strings returned through char** out-parameters. NULL is ignored. */
S3D_API void s3d_string_free(char* s);

/* ---- models and inference ---- */

typedef struct s3d_model s3d_model;
typedef struct s3d_mesh s3d_mesh;

S3D_API s3d_status s3d_model_load(const char* checkpoint_path, s3d_model** out);
S3D_API void s3d_model_free(s3d_model* model);
S3D_API const char* s3d_model_checkpoint_id(const s3d_model* model);
S3D_API int s3d_model_input_size(const s3d_model* model);
/* Generator/discriminator configs and training metadata as JSON. */
S3D_API s3d_status s3d_model_describe(const s3d_model* model, char** json_out);

/* A model may be shared by any number of threads calling these. */
S3D_API s3d_status s3d_infer_png(const s3d_model* model, const uint8_t* png, size_t png_size, s3d_mesh** out);
S3D_API s3d_status s3d_infer_file(const s3d_model* model, const char* png_path, s3d_mesh** out);

S3D_API size_t s3d_mesh_vertex_count(const s3d_mesh* mesh);
S3D_API size_t s3d_mesh_face_count(const s3d_mesh* mesh);
/* Row-major [vertex_count x 3] and [face_count x 3]; owned by the mesh. */
S3D_API const double* s3d_mesh_vertices(const s3d_mesh* mesh);
S3D_API const int32_t* s3d_mesh_faces(const s3d_mesh* mesh);
S3D_API double s3d_mesh_timing_ms(const s3d_mesh* mesh);
S3D_API s3d_status s3d_mesh_to_obj(const s3d_mesh* mesh, char** obj_out);
/* The same body the HTTP service returns for POST /api/infer. */
S3D_API s3d_status s3d_mesh_to_json(const s3d_mesh* mesh, char** json_out);
S3D_API s3d_status s3d_mesh_save_obj(const s3d_mesh* mesh, const char* path);
S3D_API void s3d_mesh_free(s3d_mesh* mesh);

/* ---- pipeline ----
 * Options and configs are JSON objects; NULL or "" selects the defaults.
 * Reports are JSON objects owned by the caller (s3d_string_free). */

/* Options: categories (count or list of names), per_category, resolution,
 * seed, test_fraction. */
S3D_API s3d_status s3d_dataset_generate(const char* out_dir, const char* options_json, char** report_json);
/* Report lists files whose SHA-256 differs from hashes.json. */
S3D_API s3d_status s3d_dataset_verify(const char* data_dir, char** report_json);

/* Training config with a "preset" key ("default" or "toy") and overrides. */
S3D_API s3d_status s3d_train_resolve_config(const char* config_json, char** resolved_json);

/* Called after every step with one NDJSON loss report line. */
typedef void (*s3d_progress_fn)(const char* report_json, void* user);
S3D_API s3d_status s3d_train(const char* data_dir, const char* out_dir, const char* config_json,
                             s3d_progress_fn progress, void* user, char** report_json);

/* Options: voxel_resolution, chamfer_samples, seed, split, categories.
 * The report carries the metrics table as JSON and as text ("text"). */
S3D_API s3d_status s3d_evaluate(const char* checkpoint_path, const char* data_dir, const char* options_json,
                                char** report_json);

/* Options: iters (>= 10), threads, warmup. */
S3D_API s3d_status s3d_benchmark(const char* checkpoint_path, const char* png_path, const char* options_json,
                                 char** report_json);

/* Options: eps, tolerance, raster_tolerance, seed. *passed is set to 1 when
 * every check passes. */
S3D_API s3d_status s3d_gradcheck(const char* options_json, int* passed, char** report_json);

/* ---- HTTP service ---- */

typedef struct s3d_server s3d_server;

/* Options: host, port (0 picks a free port), workers, max_queued,
 * max_body_bytes, cors_origin, log_path (request log, one JSON line per
 * request; default stderr). SKETCH3D_PORT in the environment overrides the
 * port. The model must outlive the server. */
S3D_API s3d_status s3d_server_create(const s3d_model* model, const char* options_json, s3d_server** out);
/* Serves on a background thread; *port receives the bound port. */
S3D_API s3d_status s3d_server_start(s3d_server* server, int* port);
/* Serves on the calling thread until s3d_server_stop. */
S3D_API s3d_status s3d_server_run(s3d_server* server);
S3D_API void s3d_server_stop(s3d_server* server);
S3D_API int s3d_server_port(const s3d_server* server);
S3D_API void s3d_server_free(s3d_server* server);

#ifdef __cplusplus
}
#endif

#endif
