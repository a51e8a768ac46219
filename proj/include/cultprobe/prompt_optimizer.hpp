#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cultprobe/matrix.hpp"
#include "cultprobe/ontology.hpp"

namespace cultprobe {

struct Token {
    int id = 0;
    std::string text;

    bool operator==(const Token&) const = default;
};

struct TokenVocabulary {
    std::vector<Token> tokens;
    Matrix embeddings;  // one row per token, same order

    std::size_t size() const { return tokens.size(); }
    std::size_t dim() const { return embeddings.cols(); }
    // Position of a surface text, or npos.
    std::size_t find(std::string_view text) const;
};

// Checks unique surface texts, unique ids and finite rows.
TokenVocabulary make_vocabulary(std::vector<Token> tokens, Matrix embeddings);

// Keeps tokens whose every character is in the alphabet, preserving ids and
// order. Throws when nothing survives.
TokenVocabulary filter_vocab(const TokenVocabulary& vocab, std::u32string_view alphabet);
TokenVocabulary filter_vocab(const TokenVocabulary& vocab, const Language& language);

// {"tokens": [{"id": 0, "text": "a"}, ...], "embeddings": [[...], ...]}
TokenVocabulary parse_vocabulary_json(std::string_view json_text);
std::string vocabulary_to_json(const TokenVocabulary& vocab);

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

struct EncoderOutput {
    std::vector<double> embedding;  // unit norm
    Matrix row_gradients;           // d(upstream . embedding) / d(row), one row per input row
};

// A differentiable text encoder over token-embedding rows. Implementations
// that work on ids (an external model) may ignore the rows; implementations
// that work on rows (the toy) may ignore the ids.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t token_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual std::vector<double> embed(std::span<const int> ids, const Matrix& rows) = 0;
    virtual EncoderOutput embed_and_gradient(std::span<const int> ids, const Matrix& rows, std::span<const double> upstream) = 0;
};

// embed = normalize(W * mean(rows)) with a fixed Gaussian W (d x d_tok).
// Permuting rows leaves the output unchanged: the toy has no word order.
class ToyEncoder final : public TextEncoder {
public:
    ToyEncoder(std::size_t d_tok, std::size_t d, std::uint64_t rng_seed);

    std::size_t token_dim() const override { return w_.cols(); }
    std::size_t output_dim() const override { return w_.rows(); }
    std::vector<double> embed(std::span<const int> ids, const Matrix& rows) override;
    EncoderOutput embed_and_gradient(std::span<const int> ids, const Matrix& rows, std::span<const double> upstream) override;

    std::vector<double> embed_rows(const Matrix& rows) const;
    Matrix gradient_rows(const Matrix& rows, std::span<const double> upstream) const;
    const Matrix& weights() const { return w_; }

private:
    std::vector<double> project(const Matrix& rows, double* norm) const;
    Matrix w_;
};

// Single characters of every registry alphabet plus the words of the English
// prompt prefixes ("a photo of <concept>"). Rows are Gaussian, seeded per
// surface text so a token keeps its row under any filtering.
TokenVocabulary toy_vocabulary(const Registry& registry, std::size_t d_tok, std::uint64_t rng_seed);

// Whitespace split, each word looked up in the vocabulary.
std::vector<int> tokenize_words(const TokenVocabulary& vocab, std::string_view text);

// Rows of the given token ids, looked up by id.
Matrix token_rows(const TokenVocabulary& vocab, std::span<const int> ids);

// Speaks the line-delimited JSON gradient protocol with a child process:
//   request  {"token_ids": [...], "upstream_vector": [...]}
//   response {"embedding": [...], "per_row_gradients": [[...], ...]}
// A response {"error": "..."} is raised as an exception.
class ExternalEncoder final : public TextEncoder {
public:
    ExternalEncoder(std::vector<std::string> argv, std::size_t token_dim, std::size_t output_dim);
    ~ExternalEncoder() override;
    ExternalEncoder(const ExternalEncoder&) = delete;
    ExternalEncoder& operator=(const ExternalEncoder&) = delete;

    std::size_t token_dim() const override { return token_dim_; }
    std::size_t output_dim() const override { return output_dim_; }
    std::vector<double> embed(std::span<const int> ids, const Matrix& rows) override;
    EncoderOutput embed_and_gradient(std::span<const int> ids, const Matrix& rows, std::span<const double> upstream) override;

    // Sends one raw line and returns the raw response line.
    std::string exchange(const std::string& line);

private:
    std::string command_;
    std::size_t token_dim_;
    std::size_t output_dim_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

// ---------------------------------------------------------------------------
// PEZ-style optimization
// ---------------------------------------------------------------------------

enum class ObjectiveKind { Textual, Visual };
enum class Projection { Euclidean, Cosine };
enum class SlotMode { Letters, Tokens };

std::string_view to_string(SlotMode mode);
SlotMode parse_slot_mode(std::string_view text);

struct ObjectiveFeatures {
    ObjectiveKind kind = ObjectiveKind::Textual;
    std::vector<double> vector;  // unit norm
};

// Normalizes; a zero or non-finite vector is an error.
ObjectiveFeatures make_objective(ObjectiveKind kind, std::span<const double> vector);

inline constexpr std::size_t kDefaultTSchedule[] = {1, 2, 3, 5, 10};

struct OptimizationConfig {
    std::size_t T = 1;
    std::size_t steps = 256;
    double learning_rate = 0.1;
    std::uint64_t rng_seed = 0;
    std::vector<int> prefix_tokens;  // frozen, e.g. "a photo of food"
    Matrix prefix_rows;              // their embeddings, taken from the unfiltered vocabulary
    Projection projection = Projection::Euclidean;
    SlotMode mode = SlotMode::Letters;
};

struct OptimizationResult {
    std::vector<std::string> gibberish_tokens;
    std::vector<int> token_ids;
    double final_loss = 0.0;  // best projected loss, -cos
    // Entry 0 is the initialization, entry s the projection after step s.
    std::vector<double> loss_trace;            // loss at that step's projected tokens
    std::vector<double> projected_loss_trace;  // best projected loss so far
};

// Index of the nearest vocabulary row (lowest index on ties).
std::size_t project_to_vocab(std::span<const double> row, const TokenVocabulary& vocab, Projection projection);

OptimizationResult optimize(const ObjectiveFeatures& objective, TextEncoder& encoder, const TokenVocabulary& vocab_filtered,
                            const OptimizationConfig& cfg);

}  // namespace cultprobe
