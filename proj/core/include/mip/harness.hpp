#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mip/activation.hpp"
#include "mip/model.hpp"
#include "mip/tokenizer.hpp"

namespace mip {

struct Statement {
    std::string text;
    int label = 0;  // 1 = true statement, 0 = false statement
    std::string split;
};

// Dataset file: UTF-8, one `text<TAB>label(0|1)<TAB>split` record per line.
// Text and split must not contain tabs or newlines.
std::vector<Statement> load_statements(const std::string& path);
void save_statements(const std::vector<Statement>& statements, const std::string& path);

struct SystemPrompt {
    std::string text;
    bool honest = false;
};

// The prompt catalog: system prompts keyed '1'..'9','0', user prompts
// keyed 'a'.., prefixes keyed by roman-numeral strings ("i", "ii", ...).
struct PromptCatalog {
    std::map<char, SystemPrompt> system_prompts;
    std::map<char, std::string> user_prompts;
    std::map<std::string, std::string> prefixes;

    // Accessors throw ValidationError naming the missing id.
    const SystemPrompt& system(char id) const;
    const std::string& user(char id) const;
    const std::string& prefix(const std::string& id) const;
};

// The built-in catalog of honest/lying prompt strings, embedded byte-exact
// (including curly quotes and trailing spaces where they occur).
PromptCatalog builtin_catalog();

// Catalog file: tab-separated lines
//   system<TAB><id char><TAB>honest|lying<TAB><text to end of line>
//   user<TAB><id char><TAB><text>
//   prefix<TAB><roman id><TAB><text>
PromptCatalog load_catalog(const std::string& path);
void save_catalog(const PromptCatalog& catalog, const std::string& path);

// Compact condition id, e.g. "2fii" = system '2', user 'f', prefix "ii";
// the prefix part may be absent ("1f").
struct PromptId {
    char system = '1';
    char user = 'a';
    std::string prefix;  // empty = no prefix

    static PromptId parse(const std::string& compact);
    std::string str() const;

    friend bool operator==(const PromptId& a, const PromptId& b) {
        return a.system == b.system && a.user == b.user && a.prefix == b.prefix;
    }
};

// Byte-exact dialog template:
//   [SYS]\n{system}\n[/SYS]\n[USER]\n{user} {statement}\n[/USER]\n[ASST]\n{prefix}
// with the trailing {prefix} omitted entirely when the id has none.
std::string compose_prompt(const PromptCatalog& catalog, const PromptId& id,
                           const Statement& statement);

struct EvalReport {
    std::string condition;  // prompt id, plus patch description when patched
    std::string split;
    double accuracy = 0.0;
    double recall_pos = 0.0;    // accuracy over true statements
    double recall_neg = 0.0;    // accuracy over false statements
    double unexpected_rate = 0.0;
    int n = 0;
};

// A patch request resolved per statement: for each evaluated statement the
// same statement is re-composed under `source_prompt`, the listed heads' z
// are captured there, and spliced into the evaluated run over `window`.
struct PatchPlan {
    std::set<std::pair<int, int>> heads;
    PositionWindow window;
    PromptId source_prompt;
};

struct AnswerTokens {
    int true_token = -1;
    int false_token = -1;
};

// Ids of the reserved "True"/"False" answer tokens.
AnswerTokens answer_tokens(const Vocab& vocab);

// Composes, runs (optionally patched), and scores every statement.
// Prediction is the argmax of (p_true, p_false) with ties going to False;
// a statement is "unexpected" when p_true + p_false < unexpected_tau but
// is still scored by the argmax rule.
EvalReport evaluate(const Model& model, const Vocab& vocab, const PromptCatalog& catalog,
                    const PromptId& id, const std::vector<Statement>& dataset,
                    const PatchPlan* patch = nullptr, double unexpected_tau = 0.5);

// Keeps exactly the statements where the model, prompted with
// `honest_prompt`, puts probability strictly greater than `threshold` on
// the correct answer token. Statements that fail to tokenize or run are
// dropped with a warning on stderr.
std::vector<Statement> filter_dataset(const std::vector<Statement>& statements,
                                      const Model& model, const Vocab& vocab,
                                      const PromptCatalog& catalog, const PromptId& honest_prompt,
                                      double threshold);

enum class ReportFormat { csv, text_table };

// CSV columns: condition,split,accuracy,recall_pos,recall_neg,
// unexpected_rate,n with rates at 4 decimal places. Byte-deterministic.
void emit_report(const std::vector<EvalReport>& reports, const std::string& path,
                 ReportFormat format);

// Writes base_path.csv (full-precision grid), base_path.pgm (8-bit P5
// graymap, min-max scaled), and base_path.bounds.txt (the scaling bounds).
// A constant grid maps to all-zero pixels.
void emit_heatmap(const std::vector<std::vector<double>>& grid, const std::string& base_path);

}  // namespace mip
