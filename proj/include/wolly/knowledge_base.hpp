#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wolly::kb {

namespace vocab {
inline constexpr std::string_view kType = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
inline constexpr std::string_view kSubClassOf = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
inline constexpr std::string_view kPerson = "http://xmlns.com/foaf/0.1/Person";
inline constexpr std::string_view kName = "http://xmlns.com/foaf/0.1/name";
inline constexpr std::string_view kMovie = "http://schema.org/Movie";
inline constexpr std::string_view kStarsIn = "http://example.org/wolly#starsIn";  // character -> movie
}  // namespace vocab

struct Term {
    enum class Kind { Iri, Literal };
    Kind kind = Kind::Iri;
    std::string value;
    std::string lang;  // literals only; may be empty

    static Term iri(std::string v) { return {Kind::Iri, std::move(v), {}}; }
    static Term literal(std::string v, std::string lang = {}) { return {Kind::Literal, std::move(v), std::move(lang)}; }
    bool is_iri() const noexcept { return kind == Kind::Iri; }

    friend auto operator<=>(const Term&, const Term&) = default;
};

struct Triple {
    std::string subject;
    std::string predicate;
    Term object;

    friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleParseError : std::runtime_error {
    TripleParseError(std::size_t line, std::string reason);
    std::size_t line;
    std::string reason;
};

struct UnknownEntity : std::runtime_error {
    explicit UnknownEntity(const std::string& iri) : std::runtime_error("unknown entity <" + iri + ">") {}
};

/// Parses one document of the triple-file grammar (docs/triples.ebnf).
std::vector<Triple> parse_triples(std::string_view text);
/// One line, terminated by " .".
std::string serialize(const Triple& t);

/// Set-semantics triple store with subject, predicate and object indexes.
/// Loads are exclusive; queries take a shared lock.
class KnowledgeBase {
public:
    /// All-or-nothing. Returns the number of triples not already present.
    std::size_t load_triples(std::string_view text);
    std::size_t load_file(const std::filesystem::path& path);

    /// Subjects s with (s, starsIn, movie).
    std::set<std::string> characters_in(const std::string& movie) const;
    /// Everyone starring in a movie with `character`, minus the character.
    std::set<std::string> costars(const std::string& character) const;
    /// BFS over "shares a direct class" and "direct subClassOf either way",
    /// ranked by (distance, IRI), at most k. Throws UnknownEntity, and
    /// std::invalid_argument for k = 0.
    std::vector<std::string> related_topics(const std::string& entity, std::size_t k) const;
    /// Triples with the entity as subject or as IRI object.
    std::set<Triple> describe(const std::string& entity) const;

    /// Index-backed pattern match; unset positions are wildcards.
    std::vector<Triple> match(const std::optional<std::string>& s, const std::optional<std::string>& p,
                              const std::optional<Term>& o) const;

    /// foaf:name of the entity, preferring an untagged or "en" literal.
    std::optional<std::string> name_of(const std::string& entity) const;
    /// Entities whose foaf:name equals `label` ignoring case and punctuation.
    std::vector<std::string> find_by_name(std::string_view label) const;

    bool contains_entity(const std::string& iri) const;
    std::vector<Triple> triples() const;
    std::size_t size() const;

private:
    bool insert_locked(const Triple& t);
    std::vector<std::string> neighbours_locked(const std::string& x) const;
    std::set<std::string> characters_locked(const std::string& movie) const;

    mutable std::shared_mutex mu_;
    std::set<Triple> triples_;
    std::unordered_map<std::string, std::vector<const Triple*>> by_subject_;
    std::unordered_map<std::string, std::vector<const Triple*>> by_predicate_;
    std::map<Term, std::vector<const Triple*>> by_object_;
};

/// Lowercase ASCII letters and digits, single spaces between words.
std::string fold_label(std::string_view s);

}  // namespace wolly::kb
