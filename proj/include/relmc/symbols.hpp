#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>

#include "errors.hpp"

namespace relmc {

/// Terms are function-free: a term is either a constant or a variable.
/// Variables start with an upper-case letter or '_'; everything else names
/// a constant.
enum class TermKind : std::uint8_t { Constant = 0, Variable = 1 };

namespace detail {

struct TermRec {
    std::string name;
    TermKind kind;
};

struct PredRec {
    std::string name;
    std::size_t arity;
};

/// Process-wide intern tables. Records live in deques so their addresses are
/// stable; identity of a symbol is the address of its record. Interning is
/// guarded by a mutex because worker threads may introduce fresh variables.
class SymbolTable {
public:
    static SymbolTable& instance() {
        static SymbolTable table;
        return table;
    }

    const TermRec* term(const std::string& name, TermKind kind) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = terms_by_name_.find(name);
        if (it != terms_by_name_.end()) {
            if (it->second->kind != kind)
                throw ValidationError("symbol '" + name +
                                      "' used both as constant and variable");
            return it->second;
        }
        term_recs_.push_back(TermRec{name, kind});
        const TermRec* rec = &term_recs_.back();
        terms_by_name_.emplace(rec->name, rec);
        return rec;
    }

    bool term_name_in_use(const std::string& name) {
        std::lock_guard<std::mutex> lock(mutex_);
        return terms_by_name_.count(name) != 0;
    }

    const PredRec* pred(const std::string& name, std::size_t arity) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = name + "/" + std::to_string(arity);
        auto it = preds_by_key_.find(key);
        if (it != preds_by_key_.end()) return it->second;
        pred_recs_.push_back(PredRec{name, arity});
        const PredRec* rec = &pred_recs_.back();
        preds_by_key_.emplace(std::move(key), rec);
        return rec;
    }

    std::uint64_t next_fresh() { return fresh_counter_.fetch_add(1) + 1; }

private:
    SymbolTable() = default;

    std::mutex mutex_;
    std::deque<TermRec> term_recs_;
    std::deque<PredRec> pred_recs_;
    std::unordered_map<std::string, const TermRec*> terms_by_name_;
    std::unordered_map<std::string, const PredRec*> preds_by_key_;
    std::atomic<std::uint64_t> fresh_counter_{0};
};

} // namespace detail

/// Interned term handle. Cheap to copy and compare; two handles are equal
/// exactly when they name the same symbol. Ordering is by (kind, name) so it
/// is reproducible across runs regardless of interning order.
class Term {
public:
    Term() : rec_(nullptr) {}

    static Term constant(const std::string& name) {
        return Term(detail::SymbolTable::instance().term(name, TermKind::Constant));
    }

    static Term variable(const std::string& name) {
        return Term(detail::SymbolTable::instance().term(name, TermKind::Variable));
    }

    /// Interns `name`, inferring the kind from its first character.
    static Term make(const std::string& name) {
        if (name.empty()) throw ValidationError("empty term name");
        bool is_var = (name[0] == '_') || (name[0] >= 'A' && name[0] <= 'Z');
        return is_var ? variable(name) : constant(name);
    }

    /// A variable guaranteed not to collide with any name seen so far.
    static Term fresh_variable() {
        auto& table = detail::SymbolTable::instance();
        for (;;) {
            std::string name = "G_" + std::to_string(table.next_fresh());
            if (!table.term_name_in_use(name)) return variable(name);
        }
    }

    bool valid() const { return rec_ != nullptr; }
    const std::string& name() const { return rec_->name; }
    TermKind kind() const { return rec_->kind; }
    bool is_variable() const { return rec_->kind == TermKind::Variable; }
    bool is_constant() const { return rec_->kind == TermKind::Constant; }

    bool operator==(const Term& other) const { return rec_ == other.rec_; }
    bool operator!=(const Term& other) const { return rec_ != other.rec_; }

    bool operator<(const Term& other) const {
        if (rec_ == other.rec_) return false;
        if (rec_->kind != other.rec_->kind) return rec_->kind < other.rec_->kind;
        return rec_->name < other.rec_->name;
    }

    std::size_t hash() const { return std::hash<const void*>()(rec_); }

private:
    explicit Term(const detail::TermRec* rec) : rec_(rec) {}

    const detail::TermRec* rec_;
};

/// Interned predicate handle; identity covers both name and arity, so p/1
/// and p/2 are distinct symbols. Ordered by (name, arity).
class Pred {
public:
    Pred() : rec_(nullptr) {}

    static Pred make(const std::string& name, std::size_t arity) {
        return Pred(detail::SymbolTable::instance().pred(name, arity));
    }

    bool valid() const { return rec_ != nullptr; }
    const std::string& name() const { return rec_->name; }
    std::size_t arity() const { return rec_->arity; }

    bool operator==(const Pred& other) const { return rec_ == other.rec_; }
    bool operator!=(const Pred& other) const { return rec_ != other.rec_; }

    bool operator<(const Pred& other) const {
        if (rec_ == other.rec_) return false;
        if (rec_->name != other.rec_->name) return rec_->name < other.rec_->name;
        return rec_->arity < other.rec_->arity;
    }

private:
    explicit Pred(const detail::PredRec* rec) : rec_(rec) {}

    const detail::PredRec* rec_;
};

} // namespace relmc

template <>
struct std::hash<relmc::Term> {
    std::size_t operator()(const relmc::Term& t) const { return t.hash(); }
};
