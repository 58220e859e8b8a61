//! Instruction texts. Trailing spaces are significant.

/// Opening line of the system prompt, followed by one function per line.
pub const SYSTEM_HEADER: &str =
    "Each integer sequence below was generated by one of the following Python functions:";

/// Closing line of the system prompt for the plain task prompts only.
pub const SYSTEM_OFFSET_NOTE: &str =
    "Sequences are not always 0 indexed , they may be offset by an arbitrary i-index value.";

pub const COMPLETION_PLAIN: &str = "Complete the following sequence.
Give the response as a number (with a base prefix if appropriate), with no additional commentary.";

pub const EXPLANATION_PLAIN: &str = "Give a function which generates the following sequence.
The function should output numbers in the same representation as the sequence.
Give the response in the format:
Explanation: <function>";

pub const EXPLANATION_RANDOM: &str = "Pick a function which generates the following sequence.
If there are multiple possible functions, choose randomly.
Assume the first number was generated by f(0), the second by f(1), and so on.
The function should output numbers in the same representation as the sequence.
Give the response in the format:
Explanation: <function>";

pub const COMPLETION_RANDOM: &str = "Choose a continuation of the following sequence. 
Assume the sequence is generated by some deterministic function. 
If multiple functions could generate the sequence, choose the corresponding continuation randomly.";

pub const EXPLANATION_SELF_CONSISTENT: &str = "Choose a function which generates the following sequence. 
Note that you will be separately asked to choose a continuation of the sequence. 
Please choose a function which is consistent with the continuation you will choose. 
Assume the first number was generated by f(0), the second by f(1), and so on. 
The function should output numbers in the same representation as the sequence. 
Give the response in the format: 
Explanation: <function>";

pub const COMPLETION_SELF_CONSISTENT: &str = "Choose a continuation of the following sequence. 
Note that you will be separately asked to choose a function which generated the sequence. 
Please choose a continuation which is consistent with the function you will choose. 
Give the response as a number (with a base prefix if appropriate), with no additional commentary.";

pub const EXPLANATION_MOST_LIKELY: &str = "What is the most likely function which generated the following sequence? 
Assume the first number was generated by f(0), the second by f(1), the third by f(2), and so on. 
The function should output the number in the same representation as the sequence. 
Give the response in the format: 
Explanation: <function> ";

pub const COMPLETION_MOST_LIKELY: &str = "What is the most likely continuation of the following sequence? 
Give the response as a number (with a base prefix if appropriate), with no additional commentary.";

/// Consistency judgment: `{verdict_yes}` / `{verdict_no}` are the first
/// affirmative and negative verdict words.
pub const JUDGMENT: &str = "Does the function generate the sequence followed by the continuation?
Answer \"{verdict_yes}\" if it does and \"{verdict_no}\" if it does not, with no additional commentary.";

/// Multiple-choice explanation query, followed by the lettered options.
pub const EXPLANATION_CHOICE: &str = "Which of the following functions generated the following sequence?
Give the response as the letter of one option, with no additional commentary.";

/// Verbalization queries; `{sequence}` is comma-joined without spaces.
pub const VERBALIZE_DEMO: &str = "For the sequence: {sequence} 
Complete the next possible number. 
Consider up to 5 possible and valid answers separated by escape character '\\n', as determined by you, {model_name}. ";

pub const VERBALIZE_QUERY: &str = "For the sequence: {sequence} 
Complete the next number and only the next number. 
Consider up to 5 possible and valid answers separated by escape character '\\n', as determined by you, {model_name}. ";

/// Literal separator between verbalized alternatives.
pub const ALTERNATIVE_SEPARATOR: &str = " \\n ";
