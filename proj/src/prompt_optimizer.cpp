#include "cultprobe/prompt_optimizer.hpp"

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "cultprobe/error.hpp"
#include "cultprobe/util.hpp"

namespace cultprobe {

using json = nlohmann::json;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

TokenVocabulary subset(const TokenVocabulary& vocab, const std::vector<std::size_t>& keep) {
    TokenVocabulary out;
    out.embeddings = Matrix(keep.size(), vocab.dim());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.tokens.push_back(vocab.tokens[keep[i]]);
        const auto src = vocab.embeddings.row(keep[i]);
        std::copy(src.begin(), src.end(), out.embeddings.row(i).begin());
    }
    return out;
}

}  // namespace

std::size_t TokenVocabulary::find(std::string_view text) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].text == text) return i;
    }
    return std::string::npos;
}

TokenVocabulary make_vocabulary(std::vector<Token> tokens, Matrix embeddings) {
    if (tokens.size() != embeddings.rows())
        throw Error("vocabulary: " + std::to_string(tokens.size()) + " tokens but " + std::to_string(embeddings.rows()) + " embedding rows");
    std::set<std::string> texts;
    std::set<int> ids;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!texts.insert(tokens[i].text).second) throw Error("vocabulary: duplicate surface text '" + tokens[i].text + "'");
        if (!ids.insert(tokens[i].id).second) throw Error("vocabulary: duplicate token id " + std::to_string(tokens[i].id));
        if (!all_finite(embeddings.row(i))) throw Error("vocabulary: non-finite embedding for '" + tokens[i].text + "'");
    }
    return TokenVocabulary{std::move(tokens), std::move(embeddings)};
}

TokenVocabulary filter_vocab(const TokenVocabulary& vocab, std::u32string_view alphabet) {
    if (vocab.size() == 0) throw Error("filter_vocab: empty vocabulary");
    std::u32string sorted(alphabet);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto chars = utf8_decode(vocab.tokens[i].text);
        if (chars.empty()) continue;
        const bool ok = std::all_of(chars.begin(), chars.end(), [&](char32_t c) { return std::binary_search(sorted.begin(), sorted.end(), c); });
        if (ok) keep.push_back(i);
    }
    if (keep.empty()) throw Error("filter_vocab: no token survives the alphabet filter");
    return subset(vocab, keep);
}

TokenVocabulary filter_vocab(const TokenVocabulary& vocab, const Language& language) {
    try {
        return filter_vocab(vocab, language.alphabet);
    } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (" + language.code + ")");
    }
}

TokenVocabulary parse_vocabulary_json(std::string_view json_text) {
    try {
        const json j = json::parse(json_text);
        std::vector<Token> tokens;
        for (const auto& t : j.at("tokens")) tokens.push_back({t.at("id").get<int>(), t.at("text").get<std::string>()});
        const auto& rows = j.at("embeddings");
        if (rows.size() != tokens.size()) throw Error("vocabulary has " + std::to_string(tokens.size()) + " tokens but " + std::to_string(rows.size()) + " rows");
        const std::size_t d = rows.empty() ? 0 : rows[0].size();
        Matrix m(tokens.size(), d);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != d) throw Error("vocabulary row " + std::to_string(r) + " has the wrong width");
            for (std::size_t c = 0; c < d; ++c) m(r, c) = rows[r][c].get<double>();
        }
        return make_vocabulary(std::move(tokens), std::move(m));
    } catch (const json::exception& e) {
        throw Error(std::string("vocabulary json: ") + e.what());
    }
}

std::string vocabulary_to_json(const TokenVocabulary& vocab) {
    nlohmann::ordered_json j;
    j["tokens"] = nlohmann::ordered_json::array();
    for (const auto& t : vocab.tokens) j["tokens"].push_back({{"id", t.id}, {"text", t.text}});
    j["embeddings"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < vocab.size(); ++r) {
        const auto row = vocab.embeddings.row(r);
        j["embeddings"].push_back(std::vector<double>(row.begin(), row.end()));
    }
    return j.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Toy encoder
// ---------------------------------------------------------------------------

ToyEncoder::ToyEncoder(std::size_t d_tok, std::size_t d, std::uint64_t rng_seed) : w_(d, d_tok) {
    if (d_tok == 0 || d == 0) throw Error("toy encoder: dimensions must be at least 1");
    Rng rng(rng_seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_tok));
    for (double& x : w_.values()) x = rng.normal() * scale;
}

std::vector<double> ToyEncoder::project(const Matrix& rows, double* norm) const {
    if (rows.rows() == 0) throw Error("toy encoder: no token rows");
    if (rows.cols() != w_.cols()) throw Error("toy encoder: token rows have dim " + std::to_string(rows.cols()) + ", expected " + std::to_string(w_.cols()));
    std::vector<double> mean(w_.cols(), 0.0);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        for (std::size_t c = 0; c < rows.cols(); ++c) mean[c] += rows(r, c);
    }
    for (double& m : mean) m /= static_cast<double>(rows.rows());
    std::vector<double> u(w_.rows(), 0.0);
    for (std::size_t i = 0; i < w_.rows(); ++i) u[i] = dot(w_.row(i), mean);
    *norm = std::sqrt(dot(u, u));
    if (!(*norm > 1e-12)) throw Error("toy encoder: zero pre-normalization vector");
    return u;
}

std::vector<double> ToyEncoder::embed_rows(const Matrix& rows) const {
    double norm = 0.0;
    auto u = project(rows, &norm);
    for (double& x : u) x /= norm;
    return u;
}

Matrix ToyEncoder::gradient_rows(const Matrix& rows, std::span<const double> upstream) const {
    if (upstream.size() != w_.rows()) throw Error("toy encoder: upstream has dim " + std::to_string(upstream.size()));
    double norm = 0.0;
    auto e = project(rows, &norm);
    for (double& x : e) x /= norm;
    // d(g.e)/du = (g - (g.e) e) / |u|
    const double ge = dot(upstream, e);
    std::vector<double> v(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) v[i] = (upstream[i] - ge * e[i]) / norm;
    // d/dmean = W^T v, and each row contributes 1/n of the mean.
    std::vector<double> z(w_.cols(), 0.0);
    for (std::size_t i = 0; i < w_.rows(); ++i) {
        for (std::size_t c = 0; c < w_.cols(); ++c) z[c] += w_(i, c) * v[i];
    }
    const double inv_n = 1.0 / static_cast<double>(rows.rows());
    Matrix g(rows.rows(), rows.cols());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        for (std::size_t c = 0; c < rows.cols(); ++c) g(r, c) = z[c] * inv_n;
    }
    return g;
}

std::vector<double> ToyEncoder::embed(std::span<const int>, const Matrix& rows) { return embed_rows(rows); }

EncoderOutput ToyEncoder::embed_and_gradient(std::span<const int>, const Matrix& rows, std::span<const double> upstream) {
    return {embed_rows(rows), gradient_rows(rows, upstream)};
}

TokenVocabulary toy_vocabulary(const Registry& registry, std::size_t d_tok, std::uint64_t rng_seed) {
    std::vector<std::string> texts;
    std::set<std::string> seen;
    const auto add = [&](std::string t) {
        if (!t.empty() && seen.insert(t).second) texts.push_back(std::move(t));
    };
    for (const auto& l : registry.languages()) {
        for (char32_t c : l.alphabet) {
            std::string s;
            utf8_append(s, c);
            add(std::move(s));
        }
    }
    for (const auto& w : split_whitespace("a photo of")) add(w);
    for (const auto& c : registry.concepts()) {
        for (auto& w : split_whitespace(c.english_term)) add(std::move(w));
    }
    std::vector<Token> tokens;
    Matrix rows(texts.size(), d_tok);
    // Unit expected norm. The toy is scale-invariant in its input, so its
    // gradient shrinks as rows grow; this scale suits the default step size.
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_tok));
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Rng rng(rng_seed ^ fnv1a64(texts[i]));
        for (double& x : rows.row(i)) x = rng.normal() * scale;
        tokens.push_back({static_cast<int>(i), texts[i]});
    }
    return make_vocabulary(std::move(tokens), std::move(rows));
}

std::vector<int> tokenize_words(const TokenVocabulary& vocab, std::string_view text) {
    std::vector<int> ids;
    for (const auto& w : split_whitespace(text)) {
        const auto pos = vocab.find(w);
        if (pos == std::string::npos) throw Error("no token for word '" + w + "'");
        ids.push_back(vocab.tokens[pos].id);
    }
    return ids;
}

Matrix token_rows(const TokenVocabulary& vocab, std::span<const int> ids) {
    std::unordered_map<int, std::size_t> index;
    for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab.tokens[i].id, i);
    Matrix rows(ids.size(), vocab.dim());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto it = index.find(ids[r]);
        if (it == index.end()) throw Error("unknown token id " + std::to_string(ids[r]));
        const auto src = vocab.embeddings.row(it->second);
        std::copy(src.begin(), src.end(), rows.row(r).begin());
    }
    return rows;
}

// ---------------------------------------------------------------------------
// External encoder
// ---------------------------------------------------------------------------

ExternalEncoder::ExternalEncoder(std::vector<std::string> argv, std::size_t token_dim, std::size_t output_dim)
    : token_dim_(token_dim), output_dim_(output_dim) {
    if (argv.empty()) throw Error("external encoder: empty command");
    for (const auto& a : argv) command_ += (command_.empty() ? "" : " ") + a;
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw Error("external encoder: socketpair failed: " + std::string(std::strerror(errno)));
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(fds[0]);
        ::close(fds[1]);
        throw Error("external encoder: fork failed: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        ::dup2(fds[1], STDIN_FILENO);
        ::dup2(fds[1], STDOUT_FILENO);
        ::close(fds[0]);
        ::close(fds[1]);
        std::vector<char*> args;
        for (auto& a : argv) args.push_back(a.data());
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(fds[1]);
    pid_ = pid;
    to_child_ = fds[0];
    from_child_ = fds[0];
}

ExternalEncoder::~ExternalEncoder() {
    if (to_child_ >= 0) ::close(to_child_);
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }
}

std::string ExternalEncoder::exchange(const std::string& line) {
    std::string out = line;
    out.push_back('\n');
    std::size_t sent = 0;
    while (sent < out.size()) {
        const auto n = ::send(to_child_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error("external encoder '" + command_ + "': write failed: " + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string reply = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return reply;
        }
        char chunk[4096];
        const auto n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw Error("external encoder '" + command_ + "' closed its output");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

EncoderOutput ExternalEncoder::embed_and_gradient(std::span<const int> ids, const Matrix&, std::span<const double> upstream) {
    json req;
    req["token_ids"] = std::vector<int>(ids.begin(), ids.end());
    req["upstream_vector"] = std::vector<double>(upstream.begin(), upstream.end());
    const std::string reply = exchange(req.dump());
    json resp;
    try {
        resp = json::parse(reply);
    } catch (const json::exception& e) {
        throw Error("external encoder '" + command_ + "': malformed response: " + e.what());
    }
    if (resp.contains("error")) throw Error("external encoder '" + command_ + "': " + resp["error"].dump());
    EncoderOutput out;
    try {
        out.embedding = resp.at("embedding").get<std::vector<double>>();
        const auto grads = resp.at("per_row_gradients").get<std::vector<std::vector<double>>>();
        if (out.embedding.size() != output_dim_)
            throw Error("embedding has dim " + std::to_string(out.embedding.size()) + ", expected " + std::to_string(output_dim_));
        if (grads.size() != ids.size())
            throw Error(std::to_string(grads.size()) + " gradient rows for " + std::to_string(ids.size()) + " tokens");
        out.row_gradients = Matrix(grads.size(), token_dim_);
        for (std::size_t r = 0; r < grads.size(); ++r) {
            if (grads[r].size() != token_dim_) throw Error("gradient row " + std::to_string(r) + " has dim " + std::to_string(grads[r].size()));
            std::copy(grads[r].begin(), grads[r].end(), out.row_gradients.row(r).begin());
        }
    } catch (const json::exception& e) {
        throw Error("external encoder '" + command_ + "': " + e.what());
    } catch (const Error& e) {
        throw Error("external encoder '" + command_ + "': " + e.what());
    }
    return out;
}

std::vector<double> ExternalEncoder::embed(std::span<const int> ids, const Matrix& rows) {
    const std::vector<double> zero(output_dim_, 0.0);
    return embed_and_gradient(ids, rows, zero).embedding;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

std::string_view to_string(SlotMode mode) { return mode == SlotMode::Letters ? "letters" : "tokens"; }

SlotMode parse_slot_mode(std::string_view text) {
    if (text == "letters") return SlotMode::Letters;
    if (text == "tokens") return SlotMode::Tokens;
    throw Error("unknown mode '" + std::string(text) + "', expected letters or tokens");
}

ObjectiveFeatures make_objective(ObjectiveKind kind, std::span<const double> vector) {
    if (vector.empty() || !all_finite(vector)) throw Error("objective: empty or non-finite vector");
    const double norm = std::sqrt(dot(vector, vector));
    if (!(norm > 1e-12)) throw Error("objective: zero vector");
    ObjectiveFeatures o;
    o.kind = kind;
    for (double x : vector) o.vector.push_back(x / norm);
    return o;
}

std::size_t project_to_vocab(std::span<const double> row, const TokenVocabulary& vocab, Projection projection) {
    if (vocab.size() == 0) throw Error("projection onto an empty vocabulary");
    std::size_t best = 0;
    double best_score = 0.0;
    const double row_norm = std::sqrt(dot(row, row));
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto e = vocab.embeddings.row(i);
        double score = 0.0;
        if (projection == Projection::Euclidean) {
            for (std::size_t c = 0; c < e.size(); ++c) score -= (row[c] - e[c]) * (row[c] - e[c]);
        } else {
            const double denom = row_norm * std::sqrt(dot(e, e));
            score = denom > 0.0 ? dot(row, e) / denom : -2.0;
        }
        if (i == 0 || score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return best;
}

OptimizationResult optimize(const ObjectiveFeatures& objective, TextEncoder& encoder, const TokenVocabulary& vocab_filtered,
                            const OptimizationConfig& cfg) {
    if (cfg.T < 1) throw Error("optimize: T must be at least 1");
    if (cfg.steps < 1) throw Error("optimize: steps must be at least 1");
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) throw Error("optimize: learning rate must be positive");
    if (objective.vector.size() != encoder.output_dim())
        throw Error("optimize: objective has dim " + std::to_string(objective.vector.size()) + ", encoder outputs " + std::to_string(encoder.output_dim()));
    if (vocab_filtered.dim() != encoder.token_dim())
        throw Error("optimize: vocabulary dim " + std::to_string(vocab_filtered.dim()) + " vs encoder token dim " + std::to_string(encoder.token_dim()));
    if (cfg.prefix_rows.rows() != cfg.prefix_tokens.size() || (!cfg.prefix_tokens.empty() && cfg.prefix_rows.cols() != encoder.token_dim()))
        throw Error("optimize: prefix rows do not match the prefix tokens");

    TokenVocabulary candidates;
    if (cfg.mode == SlotMode::Letters) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < vocab_filtered.size(); ++i) {
            if (utf8_length(vocab_filtered.tokens[i].text) == 1) keep.push_back(i);
        }
        if (keep.empty()) throw Error("optimize: no single-letter tokens in the filtered vocabulary");
        candidates = subset(vocab_filtered, keep);
    } else {
        if (vocab_filtered.size() == 0) throw Error("optimize: empty vocabulary");
        candidates = vocab_filtered;
    }

    const std::size_t n_prefix = cfg.prefix_tokens.size();
    const std::size_t d_tok = candidates.dim();
    Rng rng(cfg.rng_seed);
    Matrix soft(cfg.T, d_tok);
    for (std::size_t t = 0; t < cfg.T; ++t) {
        const auto src = candidates.embeddings.row(rng.uniform_index(candidates.size()));
        std::copy(src.begin(), src.end(), soft.row(t).begin());
    }

    std::vector<int> ids(n_prefix + cfg.T);
    Matrix rows(n_prefix + cfg.T, d_tok);
    std::copy(cfg.prefix_tokens.begin(), cfg.prefix_tokens.end(), ids.begin());
    for (std::size_t r = 0; r < n_prefix; ++r) std::copy(cfg.prefix_rows.row(r).begin(), cfg.prefix_rows.row(r).end(), rows.row(r).begin());

    std::vector<double> upstream(objective.vector.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = -objective.vector[i];

    OptimizationResult result;
    std::vector<std::size_t> picked(cfg.T);
    double best = 0.0;
    for (std::size_t step = 0; step <= cfg.steps; ++step) {
        for (std::size_t t = 0; t < cfg.T; ++t) {
            picked[t] = project_to_vocab(soft.row(t), candidates, cfg.projection);
            ids[n_prefix + t] = candidates.tokens[picked[t]].id;
            const auto src = candidates.embeddings.row(picked[t]);
            std::copy(src.begin(), src.end(), rows.row(n_prefix + t).begin());
        }
        const EncoderOutput out = encoder.embed_and_gradient(ids, rows, upstream);
        const double en = std::sqrt(dot(out.embedding, out.embedding));
        const double loss = std::clamp(-dot(out.embedding, objective.vector) / en, -1.0, 1.0);
        if (!std::isfinite(loss) || !(en > 0.0)) throw Error("optimize: non-finite loss at step " + std::to_string(step));
        if (!all_finite(out.row_gradients.values())) throw Error("optimize: non-finite gradient at step " + std::to_string(step));
        if (step == 0 || loss < best) {
            best = loss;
            result.gibberish_tokens.clear();
            result.token_ids.clear();
            for (std::size_t t = 0; t < cfg.T; ++t) {
                result.gibberish_tokens.push_back(candidates.tokens[picked[t]].text);
                result.token_ids.push_back(candidates.tokens[picked[t]].id);
            }
        }
        result.loss_trace.push_back(loss);
        result.projected_loss_trace.push_back(best);
        if (step == cfg.steps) break;
        // Gradient taken at the projected rows, applied to the continuous ones.
        for (std::size_t t = 0; t < cfg.T; ++t) {
            const auto g = out.row_gradients.row(n_prefix + t);
            auto s = soft.row(t);
            for (std::size_t c = 0; c < d_tok; ++c) s[c] -= cfg.learning_rate * g[c];
        }
    }
    result.final_loss = best;
    return result;
}

}  // namespace cultprobe
