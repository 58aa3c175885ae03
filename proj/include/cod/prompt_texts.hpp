#pragma once

// Built-in prompt templates for the discussion protocol, in Chinese and
// English. Double-brace placeholders are bound at render time. The judge
// rubric is English-only and shared by both catalogs.

namespace cod::detail {

// ---------------------------------------------------------------------------
// question_analysis
// ---------------------------------------------------------------------------

inline constexpr const char* kQuestionAnalysisSystemZh =
    "你是一个民法领域的专家，你需要从法律专业的角度分析一名咨询者提出的问题涉及哪些关键点。"
    "在分析问题之后，你还要分析检索器提供的参考法条是否能作为分析该问题的依据。"
    "请你紧紧围绕咨询者的问题进行分析，不要过度设想潜在的、与问题不相关的场景。";

inline constexpr const char* kQuestionAnalysisBodyZh =
    "咨询者的问题是“{{question}}”\n"
    "\n"
    "下面是检索器提供的参考法条：\n"
    "{{articles}}\n"
    "\n"
    "接下来，请你分析咨询者的问题“{{question}}”。请你站在咨询者的角度，"
    "首先分析咨询者所处的环境及其面对的客观事实，再围绕着咨询者的问题，"
    "分析他可能需要了解哪些方面的法律规定。你需要先对问题进行分析，"
    "再分析各个参考法条是否与该问题有关。请你遵循格式，"
    "以“问题分析：”、“法条分析：”分别作为两段分析的开头。";

inline constexpr const char* kQuestionAnalysisStopZh = "法条分析：";

inline constexpr const char* kQuestionAnalysisSystemEn =
    "You are an expert in the field of civil law. You need to analyze the key "
    "points of a question posed by a consultant from a legal professional's "
    "perspective. After analyzing the question, you should also assess "
    "whether the reference articles provided by the retriever can serve as a "
    "basis for analyzing the issue. Please focus closely on the consultant's "
    "question and avoid imagining potential scenarios unrelated to the issue.";

inline constexpr const char* kQuestionAnalysisBodyEn =
    "The consultant's question is: \"{{question}}\"\n"
    "\n"
    "Below are the reference articles provided by the retriever:\n"
    "{{articles}}\n"
    "\n"
    "Next, please analyze the consultant's question \"{{question}}\". Put "
    "yourself in the consultant's shoes: first analyze the situation they are "
    "in and the objective facts they are facing, then, focusing on the "
    "question, analyze which aspects of the law they might need to "
    "understand. Analyze the question first, then assess whether each "
    "reference article is relevant to it. Please follow the format, starting "
    "the two sections with \"Question Analysis:\" and \"Article Analysis:\" "
    "respectively.";

inline constexpr const char* kQuestionAnalysisStopEn = "Article Analysis:";

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

inline constexpr const char* kSummarizeSystemZh =
    "你是一名法律专家，你需要评价数位律师针对某个法律咨询问题的分析，并给出最终的总结性分析。"
    "这些律师的分析既包含正确的内容，也包含错误的内容。你可以参考法条中的内容，"
    "谨慎判断各位律师对问题本身的分析是否正确，以及对潜在情况的讨论是否合理。"
    "请注意，多数律师都提及的内容更有可能是正确的，你在最终总结时可以参考这部分内容。"
    "而如果某个内容仅被个别律师提及，那么该内容有可能是错误的或者与问题不相关的，"
    "你需要谨慎判断它是否合理。";

inline constexpr const char* kSummarizeBodyZh =
    "咨询者的问题是“{{question}}”\n"
    "\n"
    "下面是检索器提供的参考法条：\n"
    "{{articles}}\n"
    "\n"
    "下面是各位律师对该问题的分析：\n"
    "{{analyses}}\n"
    "\n"
    "你需要先对律师们的分析进行点评，你需要评价这些分析中的每一个要点是否正确、"
    "是否与问题相关。对于存在逻辑错误或者与问题相关度较低的要点，你要明确指出并给予批评。"
    "之后，请你基于你的点评，给出一段语气、句式都与各位律师对该问题的分析相似的总结性分析。";

inline constexpr const char* kSummarizeSystemEn =
    "You are a legal expert. You need to evaluate several lawyers' analyses "
    "of a legal consultation question and provide a final summary analysis. "
    "These analyses contain both correct and incorrect elements. You can "
    "refer to the content of the legal articles, carefully judging whether "
    "each lawyer's analysis of the issue itself is correct and whether their "
    "discussion of potential scenarios is reasonable. If the majority of "
    "lawyers provide similar analyses regarding a fact in the question or a "
    "potential scenario, then it is likely to be correct and you can include "
    "it in the summary. If a particular point is mentioned by only a few "
    "lawyers with reasons, it does not imply its unreliability; you should "
    "scrutinize such content, assessing its logical coherence and relevance "
    "to the question.";

inline constexpr const char* kSummarizeBodyEn =
    "The consultant's question is: \"{{question}}\"\n"
    "\n"
    "Below are the reference articles provided by the retriever:\n"
    "{{articles}}\n"
    "\n"
    "Below are the lawyers' analyses of the question:\n"
    "{{analyses}}\n"
    "\n"
    "First critique the lawyers' analyses, evaluating whether each point in "
    "these analyses is correct and relevant to the question. For points with "
    "logical errors or low relevance to the question, clearly point them out "
    "and provide criticism. Afterward, based on your critique, provide a "
    "summary analysis whose tone and style match the lawyers' analyses of "
    "the question.";

// ---------------------------------------------------------------------------
// evidence_analysis
// ---------------------------------------------------------------------------

inline constexpr const char* kEvidenceAnalysisSystemZh =
    "你是一名法律专家，你需要判断某个法条是否能作为依据，用于解答给定的法律咨询问题。"
    "该法条可能对于解答问题有帮助，也可能没有帮助。"
    "请你只针对下面给出的这一个法条进行分析和判断，不要对其他法条进行判断。";

inline constexpr const char* kEvidenceAnalysisBodyZh =
    "咨询者的问题是“{{question}}”\n"
    "\n"
    "问题分析：{{que_ana}}\n"
    "\n"
    "检索器提供的参考法条：\n"
    "{{article}}\n"
    "\n"
    "请你先思考该法条规定了何种权利和义务，或者对何种行为实施了禁止令。"
    "如果法条中规定或禁止的内容与问题中的关键点有一定的相关性，"
    "那么该法条有可能对于解答问题有所帮助；否则，该法条大概率对解答问题没有帮助。"
    "请你据此分析该法条能否用于解答咨询者的问题。";

inline constexpr const char* kEvidenceAnalysisSystemEn =
    "You are a legal expert tasked with determining whether a specific legal "
    "article can serve as a basis for answering a given legal consultation "
    "question. The article may or may not be helpful in answering the "
    "question. Analyze and evaluate only the single article given below, "
    "refraining from making judgments about any other article.";

inline constexpr const char* kEvidenceAnalysisBodyEn =
    "The consultant's question is: \"{{question}}\"\n"
    "\n"
    "Question Analysis: {{que_ana}}\n"
    "\n"
    "The reference article provided by the retriever:\n"
    "{{article}}\n"
    "\n"
    "First consider what rights and obligations the article specifies, or "
    "what behaviors it prohibits. If what the article specifies or prohibits "
    "is somewhat relevant to the key points of the question, then the "
    "article may be helpful in answering the question; otherwise, the "
    "article is probably not helpful. On this basis, analyze whether the "
    "article can be used to answer the consultant's question.";

// ---------------------------------------------------------------------------
// critique
// ---------------------------------------------------------------------------

inline constexpr const char* kCritiqueSystemZh =
    "你是一名法律专家，你需要点评一名律师对于某个法条是否有助于解答某个法律咨询问题的分析"
    "是否误解了法条的内容。我会明确告知你问题和法条的具体内容。";

inline constexpr const char* kCritiqueBodyZh =
    "问题：{{question}}\n"
    "\n"
    "法条：{{article}}\n"
    "\n"
    "律师对于法条的分析：{{art_ana}}\n"
    "\n"
    "接下来，请先用简洁的语言点评律师对于第{{cur_art_id}}条的分析。"
    "之后，请你判断他的分析是否误解了法条的内容。"
    "请在回复的最后单独输出一行“判定：反对”（表示该分析误解了法条内容）"
    "或“判定：同意”（表示该分析没有误解法条内容）。";

inline constexpr const char* kCritiqueSystemEn =
    "You are a legal expert. You need to critique a lawyer's analysis of "
    "whether a specific legal article is helpful in answering a particular "
    "legal consultation question, and determine whether their analysis "
    "misconstrues the content of the legal article. The specific details of "
    "the question and the legal article are given below.";

inline constexpr const char* kCritiqueBodyEn =
    "Question: {{question}}\n"
    "\n"
    "Article: {{article}}\n"
    "\n"
    "The lawyer's analysis of the article: {{art_ana}}\n"
    "\n"
    "Next, please provide a concise critique of the lawyer's analysis of "
    "Article {{cur_art_id}}. Then, determine whether their analysis "
    "misconstrues the content of the legal article. End your reply with "
    "exactly one line reading either \"VERDICT: OPPOSE\" (the analysis "
    "misconstrues the article) or \"VERDICT: AGREE\" (the analysis does not "
    "misconstrue the article).";

// ---------------------------------------------------------------------------
// revise
// ---------------------------------------------------------------------------

inline constexpr const char* kReviseSystemZh =
    "你是一名律师，你对于某个法条是否有助于解答某个法律咨询问题进行了点评。"
    "一些法学专家认为你的点评中在对法条内容的理解、法条与问题之间的关联性等角度存在错误。"
    "你需要参考你对问题的分析，修改你对法条的分析。";

inline constexpr const char* kReviseBodyZh =
    "问题：{{question}}\n"
    "\n"
    "法条：{{article}}\n"
    "\n"
    "律师对于问题的分析：{{que_ana}}\n"
    "\n"
    "律师对于法条的分析：{{art_ana}}\n"
    "\n"
    "专家点评：{{critiques}}\n"
    "\n"
    "接下来，请你重写一份更为正确的法条分析。在重写后的法条分析的结尾，"
    "请你按照你的分析，评估一下该法条是否可能有助于解答问题。";

inline constexpr const char* kReviseSystemEn =
    "You are a lawyer who has provided an assessment of whether a certain "
    "legal article is helpful in addressing a specific legal consultation "
    "question. Some legal experts believe there are errors in your "
    "assessment regarding the understanding of the legal article's content "
    "or its relevance to the question. You need to revise your analysis of "
    "the legal article with reference to your analysis of the question.";

inline constexpr const char* kReviseBodyEn =
    "Question: {{question}}\n"
    "\n"
    "Article: {{article}}\n"
    "\n"
    "The lawyer's analysis of the question: {{que_ana}}\n"
    "\n"
    "The lawyer's analysis of the legal article: {{art_ana}}\n"
    "\n"
    "Expert critiques: {{critiques}}\n"
    "\n"
    "Next, please rewrite a more accurate analysis of the legal article. At "
    "the end of the rewritten analysis, evaluate whether the legal article "
    "may indeed be helpful in addressing the question based on your "
    "analysis.";

// ---------------------------------------------------------------------------
// respond
// ---------------------------------------------------------------------------

inline constexpr const char* kRespondSystemZh =
    "你是一个法律专家，你需要从法律专业的角度回答咨询者提出的问题。"
    "你需要以具体的法条为依据回答问题，并告诉咨询者法律赋予他哪些权利和义务，"
    "或者禁止他实施哪些举措。在回答问题之前，你可以参考检索器提供的一些参考法条。"
    "但请注意，检索器提供的法条并不一定都有助于回答咨询者提出的问题，"
    "它也可能与提问者的问题无关。因此，你需要对问题涉及的事实背景进行分析，"
    "再判断各个法条是否能够作为回答问题的依据。"
    "请你不要将检索器提供的全部参考法条都当作依据，"
    "也不要引用参考法条之外的其他法条作为依据。在回答的过程中，"
    "请你紧紧围绕提问者的问题进行讨论，不要过度设想潜在的、与问题不相关的情形。";

inline constexpr const char* kRespondBodyZh =
    "咨询者的问题是“{{question}}”\n"
    "\n"
    "下面是检索器提供的参考法条：\n"
    "{{articles}}\n"
    "\n"
    "接下来，请你回答咨询者提出的问题“{{question}}”。"
    "你需要先对该问题的关键点进行分析，然后判断各个参考法条是否有助于解答该问题。"
    "最后请你使用与该问题有关的部分法条作为依据，给出详细的回答。"
    "回答过程中禁止使用参考法条之外的内容。\n"
    "\n"
    "问题分析：{{que_ana}}\n"
    "\n"
    "法条分析：{{art_ana}}\n"
    "\n"
    "回答：";

inline constexpr const char* kRespondSystemEn =
    "You are a legal expert, and you need to answer the question posed by "
    "the consultant from a legal perspective. You are required to provide "
    "specific legal articles as the basis for your answer, informing the "
    "consultant of their rights and obligations conferred by the law, or "
    "actions prohibited by it. Before answering the question, you can refer "
    "to some reference articles provided by the retriever. However, please "
    "note that the articles provided by the retriever may not necessarily be "
    "helpful in answering the consultant's question; they may also be "
    "irrelevant to the question. Therefore, you need to analyze the factual "
    "background of the issue involved, then determine whether each article "
    "can serve as a basis for answering the question. Please do not consider "
    "all the reference articles provided by the retriever as the basis, nor "
    "cite any articles outside the reference ones as evidence. During your "
    "response, focus closely on the consultant's question, avoiding "
    "imagining potential scenarios unrelated to the issue.";

inline constexpr const char* kRespondBodyEn =
    "The consultant's question is: \"{{question}}\"\n"
    "\n"
    "Below are the reference articles provided by the retriever:\n"
    "{{articles}}\n"
    "\n"
    "Next, please answer the question posed by the consultant: "
    "\"{{question}}\". You need to analyze the key points of the question "
    "first, then determine whether each reference article is helpful in "
    "answering it. Finally, please provide a detailed answer using relevant "
    "portions of the articles as the basis. Use of content outside the "
    "reference articles is prohibited during the response.\n"
    "\n"
    "Question Analysis: {{que_ana}}\n"
    "\n"
    "Article Analysis: {{art_ana}}\n"
    "\n"
    "Answer:";

// ---------------------------------------------------------------------------
// judge (English-only rubric, shared by both catalogs)
// ---------------------------------------------------------------------------

inline constexpr const char* kJudgeBody =
    "[Instruction]\n"
    "\n"
    "Please act as an impartial judge and evaluate the quality of the "
    "response provided by an AI assistant to the user question displayed "
    "below. Your evaluation should consider factors such as the logicality, "
    "helpfulness, relevance, accuracy, depth, and whether using irrelevant "
    "articles beyond the reference articles as a basis. Begin your "
    "evaluation by providing a short explanation. You will be given several "
    "reference articles, a high-quality reference answer and the "
    "assistant's answer. Be as objective as possible. You should first "
    "provide your explanation IN CHINESE, then you must rate the response "
    "on a scale of 1 to 10 by STRICTLY following the below MAPPING for the "
    "relation between the scores and response quality:\n"
    "\n"
    "1. The score 1~2 stands for very chaotic or absence of answer, and the "
    "AI assistant completely failed to answer the user's question. Serious "
    "logical and factual errors might also be included in this term. The "
    "gap between the AI assistant's answer and the high-quality reference "
    "answer is huge and insuperable.\n"
    "\n"
    "2. The score 3~4 indicates fragment-like responses from AI assistant's "
    "answer. It did not provide answers in proper grammar, fluency, or "
    "accuracy. Citing irrelevant articles and resulting in a redundant "
    "output also falls under this scenario. There are obvious gaps between "
    "the high-quality reference answer and the AI assistant's response.\n"
    "\n"
    "3. The score 5~6 indicates for existence of minute disadvantage from "
    "the AI assistant's answer compared to the high-quality reference "
    "answer. Yet the AI assistant did provide an average answer. The AI "
    "assistant either did not fully address the question, or was somewhat "
    "short of logicality, helpfulness, relevance, depth, or detailedness. "
    "The disadvantages from the AI assistant's answer overwhelm its "
    "advantages.\n"
    "\n"
    "4. The score 7~8 indicates the AI assistant provided a good answer as "
    "well as the high-quality reference answer, addressing the question, "
    "with good helpfulness, relevance, accuracy, depth, creativity, and "
    "enough details. The response of AI assistant does not include any "
    "irrelevant articles beyond the reference articles. The AI assistant "
    "might have flaws compared to the reference answer, but that does not "
    "overwhelm the above advantages.\n"
    "\n"
    "5. The score 9~10 indicates the AI assistant responded better than the "
    "provided reference answer in most aspects, fully achieved the "
    "instruction goal, provided more detailed analysis, and have unique "
    "advantages to the reference answer.\n"
    "\n"
    "You should give scores around 7 if you do not find obvious advantages "
    "or disadvantages. You should seriously consider the above guide before "
    "give lowest and highest scores such as 1 or 10, and avoid such "
    "situation if you do not have sound explanations. Avoid any positional "
    "biases and ensure that the order in which the responses were presented "
    "does not influence your decision. Do not allow the length of the "
    "responses to influence your evaluation. Do not favor certain names of "
    "the assistants. AND again, VERY IMPORTANTLY, after you provide your "
    "explanation IN CHINESE, you must rate the response strictly following "
    "this format: \"Rating: [[Number]]\", for example: Rating: [[5]].\n"
    "\n"
    "[User's Question]\n"
    "\n"
    "{{question}}\n"
    "\n"
    "[The Start of Reference Articles]\n"
    "\n"
    "{{articles}}\n"
    "\n"
    "[The End of Reference Articles]\n"
    "\n"
    "[The Start of Reference Answer]\n"
    "\n"
    "{{golden_response}}\n"
    "\n"
    "[The End of Reference Answer]\n"
    "\n"
    "[The Start of Assistant's Answer]\n"
    "\n"
    "{{llm_response}}\n"
    "\n"
    "[The End of Assistant's Answer]";

}  // namespace cod::detail
