#include "wolly/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>

namespace wolly::kb {

TripleParseError::TripleParseError(std::size_t l, std::string r)
    : std::runtime_error("line " + std::to_string(l) + ": " + r), line(l), reason(std::move(r)) {}

namespace {

bool iri_char(unsigned char c) {
    if (c <= 0x20) return false;
    switch (c) {
        case '<': case '>': case '"': case '{': case '}': case '|': case '^': case '`': case '\\': return false;
        default: return true;
    }
}

void append_utf8(std::string& out, unsigned long cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

class LineParser {
public:
    LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

    std::optional<Triple> parse() {
        skip_ws();
        if (done() || peek() == '#') return std::nullopt;
        Triple t;
        t.subject = iri("subject");
        require_ws();
        t.predicate = iri("predicate");
        require_ws();
        if (!done() && peek() == '"') {
            t.object = literal();
        } else if (!done() && peek() == '<') {
            t.object = Term::iri(iri("object"));
        } else {
            fail("object must be an IRI or a quoted literal");
        }
        skip_ws();
        if (done() || peek() != '.') fail("missing terminal '.'");
        ++i_;
        skip_ws();
        if (!done() && peek() != '#') fail("unexpected text after '.'");
        return t;
    }

private:
    [[noreturn]] void fail(const std::string& r) { throw TripleParseError(line_, r); }
    bool done() const { return i_ >= s_.size(); }
    char peek() const { return s_[i_]; }
    void skip_ws() {
        while (!done() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++i_;
    }
    void require_ws() {
        if (done() || (peek() != ' ' && peek() != '\t')) fail("expected whitespace between terms");
        skip_ws();
    }

    std::string iri(const char* what) {
        if (done() || peek() != '<') fail(std::string(what) + " must be an IRI in angle brackets");
        ++i_;
        auto start = i_;
        while (!done() && iri_char(static_cast<unsigned char>(peek()))) ++i_;
        if (done() || peek() != '>') fail(std::string("unterminated or invalid ") + what + " IRI");
        std::string v(s_.substr(start, i_ - start));
        ++i_;
        // absolute: scheme ":" rest, scheme = ALPHA *( ALPHA / DIGIT / "+" / "-" / "." )
        auto colon = v.find(':');
        bool ok = colon != std::string::npos && colon > 0 && colon + 1 < v.size() &&
                  std::isalpha(static_cast<unsigned char>(v[0]));
        for (std::size_t k = 1; ok && k < colon; ++k) {
            char c = v[k];
            ok = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
        }
        if (!ok) fail(std::string(what) + " IRI <" + v + "> is not absolute");
        return v;
    }

    unsigned long hex(int digits) {
        unsigned long v = 0;
        for (int k = 0; k < digits; ++k) {
            if (done() || !std::isxdigit(static_cast<unsigned char>(peek()))) fail("bad \\u escape");
            char c = s_[i_++];
            v = v * 16 + static_cast<unsigned long>(std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
                                                                                                 : std::tolower(c) - 'a' + 10);
        }
        if (v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF)) fail("escape is not a Unicode scalar value");
        return v;
    }

    Term literal() {
        ++i_;  // opening quote
        std::string v;
        while (true) {
            if (done()) fail("unterminated literal");
            char c = s_[i_++];
            if (c == '"') break;
            if (c == '\\') {
                if (done()) fail("dangling escape");
                char e = s_[i_++];
                switch (e) {
                    case 't': v += '\t'; break;
                    case 'n': v += '\n'; break;
                    case 'r': v += '\r'; break;
                    case '"': v += '"'; break;
                    case '\\': v += '\\'; break;
                    case 'u': append_utf8(v, hex(4)); break;
                    case 'U': append_utf8(v, hex(8)); break;
                    default: fail(std::string("unknown escape \\") + e);
                }
            } else {
                v += c;
            }
        }
        std::string lang;
        if (!done() && peek() == '@') {
            ++i_;
            auto start = i_;
            while (!done() && std::isalpha(static_cast<unsigned char>(peek()))) ++i_;
            if (i_ == start) fail("empty language tag");
            while (!done() && peek() == '-') {
                ++i_;
                auto sub = i_;
                while (!done() && std::isalnum(static_cast<unsigned char>(peek()))) ++i_;
                if (i_ == sub) fail("empty language subtag");
            }
            lang = std::string(s_.substr(start, i_ - start));
        } else if (!done() && peek() == '^') {
            fail("typed literals are not supported");
        }
        return Term::literal(std::move(v), std::move(lang));
    }

    std::string_view s_;
    std::size_t line_;
    std::size_t i_ = 0;
};

void escape_into(std::string& out, const std::string& v) {
    for (char c : v) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
}

}  // namespace

std::vector<Triple> parse_triples(std::string_view text) {
    std::vector<Triple> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        if (auto t = LineParser(line, line_no).parse()) out.push_back(std::move(*t));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

std::string serialize(const Triple& t) {
    std::string out = "<" + t.subject + "> <" + t.predicate + "> ";
    if (t.object.is_iri()) {
        out += "<" + t.object.value + ">";
    } else {
        out += '"';
        escape_into(out, t.object.value);
        out += '"';
        if (!t.object.lang.empty()) out += "@" + t.object.lang;
    }
    return out + " .";
}

std::string fold_label(std::string_view s) {
    std::string out;
    bool space = false;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            if (space && !out.empty()) out += ' ';
            space = false;
            out += static_cast<char>(std::tolower(c));
        } else if (std::isspace(c) || c == '-' || c == '_') {
            space = true;
        }
    }
    return out;
}

bool KnowledgeBase::insert_locked(const Triple& t) {
    auto [it, fresh] = triples_.insert(t);
    if (!fresh) return false;
    const Triple* p = &*it;
    by_subject_[p->subject].push_back(p);
    by_predicate_[p->predicate].push_back(p);
    by_object_[p->object].push_back(p);
    return true;
}

std::size_t KnowledgeBase::load_triples(std::string_view text) {
    auto parsed = parse_triples(text);  // throws before any mutation
    std::unique_lock lock(mu_);
    std::size_t added = 0;
    for (const auto& t : parsed) added += insert_locked(t);
    return added;
}

std::size_t KnowledgeBase::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_triples(ss.str());
}

std::vector<Triple> KnowledgeBase::match(const std::optional<std::string>& s, const std::optional<std::string>& p,
                                         const std::optional<Term>& o) const {
    std::shared_lock lock(mu_);
    static const std::vector<const Triple*> kNone;
    const std::vector<const Triple*>* candidates = nullptr;
    auto narrow = [&](const std::vector<const Triple*>& list) {
        if (!candidates || list.size() < candidates->size()) candidates = &list;
    };
    if (s) {
        auto it = by_subject_.find(*s);
        narrow(it == by_subject_.end() ? kNone : it->second);
    }
    if (p) {
        auto it = by_predicate_.find(*p);
        narrow(it == by_predicate_.end() ? kNone : it->second);
    }
    if (o) {
        auto it = by_object_.find(*o);
        narrow(it == by_object_.end() ? kNone : it->second);
    }
    std::vector<Triple> out;
    auto keep = [&](const Triple& t) {
        return (!s || t.subject == *s) && (!p || t.predicate == *p) && (!o || t.object == *o);
    };
    if (candidates) {
        for (const Triple* t : *candidates) {
            if (keep(*t)) out.push_back(*t);
        }
        std::sort(out.begin(), out.end());
    } else {
        out.assign(triples_.begin(), triples_.end());
    }
    return out;
}

std::set<std::string> KnowledgeBase::characters_locked(const std::string& movie) const {
    std::set<std::string> out;
    auto it = by_object_.find(Term::iri(movie));
    if (it == by_object_.end()) return out;
    for (const Triple* t : it->second) {
        if (t->predicate == vocab::kStarsIn) out.insert(t->subject);
    }
    return out;
}

std::set<std::string> KnowledgeBase::characters_in(const std::string& movie) const {
    std::shared_lock lock(mu_);
    return characters_locked(movie);
}

std::set<std::string> KnowledgeBase::costars(const std::string& character) const {
    std::shared_lock lock(mu_);
    std::set<std::string> out;
    auto it = by_subject_.find(character);
    if (it == by_subject_.end()) return out;
    for (const Triple* t : it->second) {
        if (t->predicate != vocab::kStarsIn || !t->object.is_iri()) continue;
        for (auto& c : characters_locked(t->object.value)) out.insert(c);
    }
    out.erase(character);
    return out;
}

std::vector<std::string> KnowledgeBase::neighbours_locked(const std::string& x) const {
    std::set<std::string> out;
    auto subj = by_subject_.find(x);
    if (subj != by_subject_.end()) {
        for (const Triple* t : subj->second) {
            if (!t->object.is_iri()) continue;
            if (t->predicate == vocab::kSubClassOf) out.insert(t->object.value);
            if (t->predicate == vocab::kType) {
                // every other instance of the same direct class
                auto inst = by_object_.find(t->object);
                for (const Triple* u : inst->second) {
                    if (u->predicate == vocab::kType) out.insert(u->subject);
                }
            }
        }
    }
    auto obj = by_object_.find(Term::iri(x));
    if (obj != by_object_.end()) {
        for (const Triple* t : obj->second) {
            if (t->predicate == vocab::kSubClassOf) out.insert(t->subject);
        }
    }
    out.erase(x);
    return {out.begin(), out.end()};
}

std::vector<std::string> KnowledgeBase::related_topics(const std::string& entity, std::size_t k) const {
    if (k == 0) throw std::invalid_argument("related_topics needs k >= 1");
    std::shared_lock lock(mu_);
    if (!by_subject_.count(entity) && !by_object_.count(Term::iri(entity))) throw UnknownEntity(entity);
    std::map<std::string, std::size_t> dist{{entity, 0}};
    std::deque<std::string> frontier{entity};
    while (!frontier.empty()) {
        auto x = frontier.front();
        frontier.pop_front();
        for (auto& n : neighbours_locked(x)) {
            if (dist.emplace(n, dist[x] + 1).second) frontier.push_back(n);
        }
    }
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (auto& [iri, d] : dist) {
        if (d > 0) ranked.emplace_back(d, iri);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].second);
    return out;
}

std::set<Triple> KnowledgeBase::describe(const std::string& entity) const {
    std::shared_lock lock(mu_);
    std::set<Triple> out;
    if (auto it = by_subject_.find(entity); it != by_subject_.end()) {
        for (const Triple* t : it->second) out.insert(*t);
    }
    if (auto it = by_object_.find(Term::iri(entity)); it != by_object_.end()) {
        for (const Triple* t : it->second) out.insert(*t);
    }
    return out;
}

std::optional<std::string> KnowledgeBase::name_of(const std::string& entity) const {
    std::shared_lock lock(mu_);
    auto it = by_subject_.find(entity);
    if (it == by_subject_.end()) return std::nullopt;
    std::optional<std::string> best;
    int best_rank = 3;
    for (const Triple* t : it->second) {
        if (t->predicate != vocab::kName || t->object.is_iri()) continue;
        int rank = t->object.lang.empty() ? 0 : t->object.lang == "en" ? 1 : 2;
        if (rank < best_rank || (rank == best_rank && t->object.value < *best)) {
            best = t->object.value;
            best_rank = rank;
        }
    }
    return best;
}

std::vector<std::string> KnowledgeBase::find_by_name(std::string_view label) const {
    auto want = fold_label(label);
    std::shared_lock lock(mu_);
    std::set<std::string> out;
    auto it = by_predicate_.find(std::string(vocab::kName));
    if (it == by_predicate_.end() || want.empty()) return {};
    for (const Triple* t : it->second) {
        if (!t->object.is_iri() && fold_label(t->object.value) == want) out.insert(t->subject);
    }
    return {out.begin(), out.end()};
}

bool KnowledgeBase::contains_entity(const std::string& iri) const {
    std::shared_lock lock(mu_);
    return by_subject_.count(iri) || by_object_.count(Term::iri(iri)) || by_predicate_.count(iri);
}

std::vector<Triple> KnowledgeBase::triples() const {
    std::shared_lock lock(mu_);
    return {triples_.begin(), triples_.end()};
}

std::size_t KnowledgeBase::size() const {
    std::shared_lock lock(mu_);
    return triples_.size();
}

}  // namespace wolly::kb
